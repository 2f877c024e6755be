//! Whole-model behavior: finite-difference gradient verification on the
//! tiny instance, permutation equivariance, softmax closure, freezing and
//! the ablation-pathway consistency contracts.

use mmresgnn_core::features::FeatureParams;
use mmresgnn_core::graph::{build_espl_graph, ESPLGraph, GraphConfig};
use mmresgnn_core::oracle::OracleParams;
use mmresgnn_core::render::{render_ego_image, EgoImage};
use mmresgnn_core::scene::{generate_scene, ScenarioKind, Scene, SceneConfig};
use mmresgnn_core::trajectory::{simulate_trajectories, Snapshot};
use mmresgnn_model::config::{FeatureMask, ModelConfig};
use mmresgnn_model::model::Model;
use mmresgnn_model::params::Grads;
use mmresgnn_model::scalar::Scalar;
use mmresgnn_model::tensorize::{tensorize_graph, GraphTensors, TargetMode};

fn fixture_scene(seed: u64) -> (Scene, Vec<Snapshot>) {
    let cfg = SceneConfig::for_scenario(ScenarioKind::WideLane, seed);
    let scene = generate_scene(&cfg).unwrap();
    let snaps = simulate_trajectories(&scene, 4, seed + 1).unwrap();
    (scene, snaps)
}

fn tiny_graph(seed: u64) -> (ESPLGraph, EgoImage) {
    let (scene, snaps) = fixture_scene(seed);
    let gcfg = GraphConfig { k: 5, k_corr: 2 };
    let graph = build_espl_graph(
        &scene,
        &snaps[0],
        &OracleParams::default(),
        None,
        &gcfg,
        &FeatureParams::default(),
    )
    .unwrap();
    let image = render_ego_image(&scene, &snaps[0], 16, 60.0).unwrap();
    (graph, image)
}

fn tensors_for<T: Scalar>(graph: &ESPLGraph, image: &EgoImage, config: &ModelConfig) -> GraphTensors<T> {
    tensorize_graph(
        graph,
        image,
        config,
        Some(TargetMode::StandardizedRaw { mu: 100.0, sigma: 10.0 }),
    )
    .unwrap()
}

/// Central finite differences against analytic gradients over every
/// registered parameter. Deviations below the finite-difference noise floor
/// (1e-7 absolute) count as agreement; everything else must match to the
/// returned relative deviation.
fn gradcheck_all_params(model: &mut Model<f64>, tensors: &GraphTensors<f64>) -> f64 {
    let inv = 1.0 / tensors.k() as f64;
    let mut grads = Grads::zeros_like(&model.store);
    model.loss_and_grads(tensors, inv, &mut grads).unwrap();

    let eps = 1e-5;
    let atol = 1e-7;
    let mut worst: f64 = 0.0;
    for pid in 0..model.store.len() {
        let (rows, cols) = {
            let d = model.store.entries()[pid].data.raw_dim();
            (d[0], d[1])
        };
        for r in 0..rows {
            for c in 0..cols {
                let id = mmresgnn_model::params::ParamId(pid);
                let orig = model.store.get(id)[[r, c]];
                model.store.get_mut(id)[[r, c]] = orig + eps;
                let up = model.loss(tensors).unwrap();
                model.store.get_mut(id)[[r, c]] = orig - eps;
                let down = model.loss(tensors).unwrap();
                model.store.get_mut(id)[[r, c]] = orig;
                let fd = (up - down) / (2.0 * eps);
                let analytic = grads.tensors[pid][[r, c]];
                let err = (analytic - fd).abs();
                if err <= atol {
                    continue;
                }
                worst = worst.max(err / analytic.abs().max(fd.abs()));
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_on_tiny_instance() {
    let (graph, image) = tiny_graph(42);
    let config = ModelConfig::tiny(7);
    let mut model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let worst = gradcheck_all_params(&mut model, &tensors);
    assert!(
        worst <= 1e-4,
        "worst relative gradient deviation {worst} exceeds 1e-4"
    );
}

#[test]
fn gradients_match_for_gcn_and_gat_variants() {
    let (graph, image) = tiny_graph(43);
    for op in [
        mmresgnn_model::config::GnnOperator::Gcn,
        mmresgnn_model::config::GnnOperator::Gat,
    ] {
        let config = ModelConfig {
            gnn_operator: op,
            ..ModelConfig::tiny(23)
        };
        let mut model: Model<f64> = Model::new(config.clone()).unwrap();
        let tensors = tensors_for::<f64>(&graph, &image, &config);
        let worst = gradcheck_all_params(&mut model, &tensors);
        assert!(worst <= 1e-4, "{op:?}: worst deviation {worst}");
    }
}

#[test]
fn gradients_match_for_fusion_variants_and_vision_only() {
    let (graph, image) = tiny_graph(44);
    for fusion in [
        mmresgnn_model::config::FusionKind::Concat,
        mmresgnn_model::config::FusionKind::CrossAttention,
    ] {
        let config = ModelConfig {
            fusion,
            ..ModelConfig::tiny(23)
        };
        let mut model: Model<f64> = Model::new(config.clone()).unwrap();
        let tensors = tensors_for::<f64>(&graph, &image, &config);
        let worst = gradcheck_all_params(&mut model, &tensors);
        assert!(worst <= 1e-4, "{fusion:?}: worst deviation {worst}");
    }
    let config = ModelConfig {
        vision_only: true,
        ..ModelConfig::tiny(23)
    };
    let mut model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let worst = gradcheck_all_params(&mut model, &tensors);
    assert!(worst <= 1e-4, "vision_only: worst deviation {worst}");
}

#[test]
fn forward_is_deterministic_and_k_sized() {
    let (graph, image) = tiny_graph(45);
    let config = ModelConfig::tiny(11);
    let model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let a = model.forward(&tensors).unwrap().preds;
    let b = model.forward(&tensors).unwrap().preds;
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let model2: Model<f64> = Model::new(config).unwrap();
    let c = model2.forward(&tensors).unwrap().preds;
    for (x, y) in a.iter().zip(c.iter()) {
        assert_eq!(x.to_bits(), y.to_bits(), "same seed must reproduce the model");
    }
}

#[test]
fn permutation_equivariance_over_rx_order() {
    let (graph, image) = tiny_graph(46);
    let config = ModelConfig::tiny(12);
    let model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let base = model.forward(&tensors).unwrap().preds;

    // Permute Rx node indices and shuffle the edge lists.
    let k = graph.transmission_edges.len();
    let perm: Vec<usize> = vec![3, 5, 1, 4, 2]; // image of node i+1
    let mut permuted = graph.clone();
    permuted.nodes = {
        let mut nodes = graph.nodes.clone();
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = graph.nodes[old + 1];
        }
        nodes[0] = graph.nodes[0];
        nodes
    };
    for e in &mut permuted.transmission_edges {
        e.rx_index = perm[e.rx_index - 1];
    }
    for e in &mut permuted.correlation_edges {
        e.src = perm[e.src - 1];
        e.dst = perm[e.dst - 1];
    }
    // Shuffle transmission edge order with a fixed permutation.
    let edge_order: Vec<usize> = vec![4, 0, 3, 1, 2];
    let shuffled: Vec<_> = edge_order
        .iter()
        .map(|&i| permuted.transmission_edges[i].clone())
        .collect();
    permuted.transmission_edges = shuffled;
    permuted.correlation_edges.rotate_left(3);

    let tensors_p = tensors_for::<f64>(&permuted, &image, &config);
    let out = model.forward(&tensors_p).unwrap().preds;
    for i in 0..k {
        let expect = base[edge_order[i]];
        assert!(
            (out[i] - expect).abs() < 1e-9,
            "prediction {i} changed under permutation: {} vs {expect}",
            out[i]
        );
    }
}

#[test]
fn softmax_and_gate_closure() {
    let (graph, image) = tiny_graph(47);
    for seed in 0..5 {
        let config = ModelConfig::tiny(100 + seed);
        let model: Model<f64> = Model::new(config.clone()).unwrap();
        let tensors = tensors_for::<f64>(&graph, &image, &config);
        let diag = model.diagnostics(&tensors).unwrap();
        assert!(!diag.attention_sums.is_empty());
        for s in &diag.attention_sums {
            assert!((s - 1.0).abs() <= 1e-6, "attention sum {s}");
        }
        for s in &diag.gate_triplet_sums {
            assert!((s - 1.0).abs() <= 1e-6, "gate triplet sum {s}");
        }
        for w in &diag.fusion_gates {
            assert!(*w > 0.0 && *w < 1.0, "fusion gate {w}");
        }
    }
}

#[test]
fn single_in_neighbor_attention_weight_is_one() {
    // Disable correlation edges: each Rx has exactly one in-edge (from Tx).
    let (graph, image) = tiny_graph(48);
    let config = ModelConfig {
        use_correlation_edges: false,
        ..ModelConfig::tiny(23)
    };
    let model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let diag = model.diagnostics(&tensors).unwrap();
    for s in &diag.attention_sums {
        assert!((s - 1.0).abs() <= 1e-12);
    }
}

fn copy_matching_params<T: Scalar>(src: &Model<T>, dst: &mut Model<T>) {
    let by_name: std::collections::HashMap<String, usize> = src
        .store
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.clone(), i))
        .collect();
    for i in 0..dst.store.len() {
        let name = dst.store.entries()[i].name.clone();
        if let Some(&j) = by_name.get(&name) {
            let data = src.store.entries()[j].data.clone();
            if data.raw_dim() == dst.store.entries()[i].data.raw_dim() {
                *dst.store.get_mut(mmresgnn_model::params::ParamId(i)) = data;
            }
        }
    }
}

#[test]
fn feature_mask_ablation_matches_zeroed_inputs() {
    // A6: the masked model on raw inputs equals the full model on inputs
    // whose static-obstacle features were zeroed; and perturbing those
    // features does not change the masked model output.
    let (mut graph, image) = tiny_graph(49);
    let full_cfg = ModelConfig::tiny(14);
    let masked_cfg = ModelConfig {
        feature_mask: FeatureMask::without_group(1),
        ..full_cfg.clone()
    };
    let model: Model<f64> = Model::new(full_cfg.clone()).unwrap();

    let masked_tensors = tensors_for::<f64>(&graph, &image, &masked_cfg);
    let masked_out = model.forward(&masked_tensors).unwrap().preds;

    // Full model with manually zeroed G2 inputs.
    let mut zeroed = graph.clone();
    for e in &mut zeroed.transmission_edges {
        e.features.values[2] = 0.0;
        e.features.values[3] = 0.0;
    }
    for e in &mut zeroed.correlation_edges {
        e.features.values[2] = 0.0;
        e.features.values[3] = 0.0;
    }
    let zeroed_tensors = tensors_for::<f64>(&zeroed, &image, &full_cfg);
    let zeroed_out = model.forward(&zeroed_tensors).unwrap().preds;
    for (a, b) in masked_out.iter().zip(zeroed_out.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // Perturbation invariance under the mask.
    for e in &mut graph.transmission_edges {
        e.features.values[2] = 0.777;
        e.features.values[3] = 0.333;
    }
    let perturbed_tensors = tensors_for::<f64>(&graph, &image, &masked_cfg);
    let perturbed_out = model.forward(&perturbed_tensors).unwrap().preds;
    for (a, b) in masked_out.iter().zip(perturbed_out.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn correlation_edge_ablation_equals_edge_free_graph() {
    let (graph, image) = tiny_graph(50);
    let full_cfg = ModelConfig::tiny(15);
    let ablated_cfg = ModelConfig {
        use_correlation_edges: false,
        ..full_cfg.clone()
    };
    let model: Model<f64> = Model::new(full_cfg.clone()).unwrap();
    let t1 = tensors_for::<f64>(&graph, &image, &ablated_cfg);
    let mut stripped = graph.clone();
    stripped.correlation_edges.clear();
    let t2 = tensors_for::<f64>(&stripped, &image, &full_cfg);
    assert_eq!(t1.num_edges(), t2.num_edges());
    let a = model.forward(&t1).unwrap().preds;
    let b = model.forward(&t2).unwrap().preds;
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn disabled_visual_branch_equals_zeroed_visual_features() {
    let (graph, image) = tiny_graph(51);
    let full_cfg = ModelConfig::tiny(16);
    let novis_cfg = ModelConfig {
        use_visual: false,
        ..full_cfg.clone()
    };
    let full: Model<f64> = Model::new(full_cfg.clone()).unwrap();
    let mut novis: Model<f64> = Model::new(novis_cfg.clone()).unwrap();
    copy_matching_params(&full, &mut novis);

    // Zero the visual projection so the full model produces f_vis = 0.
    let mut full_zero = full.cast::<f64>();
    for i in 0..full_zero.store.len() {
        let name = full_zero.store.entries()[i].name.clone();
        if name.starts_with("visual.proj") {
            full_zero
                .store
                .get_mut(mmresgnn_model::params::ParamId(i))
                .mapv_inplace(|_| 0.0);
        }
    }
    let t_full = tensors_for::<f64>(&graph, &image, &full_cfg);
    let t_novis = tensors_for::<f64>(&graph, &image, &novis_cfg);
    let a = full_zero.forward(&t_full).unwrap().preds;
    let b = novis.forward(&t_novis).unwrap().preds;
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn flat_encoder_changes_only_the_encoder_pathway() {
    let (graph, image) = tiny_graph(52);
    let grouped_cfg = ModelConfig::tiny(17);
    let flat_cfg = ModelConfig {
        flat_edge_encoder: true,
        ..grouped_cfg.clone()
    };
    let grouped: Model<f64> = Model::new(grouped_cfg.clone()).unwrap();
    let mut flat: Model<f64> = Model::new(flat_cfg.clone()).unwrap();
    copy_matching_params(&grouped, &mut flat);

    // Zero both encoders entirely: with identical downstream parameters the
    // two variants must coincide.
    let mut grouped_zero = grouped.cast::<f64>();
    for m in [&mut grouped_zero, &mut flat] {
        for i in 0..m.store.len() {
            let name = m.store.entries()[i].name.clone();
            if name.starts_with("edge_enc.") {
                m.store
                    .get_mut(mmresgnn_model::params::ParamId(i))
                    .mapv_inplace(|_| 0.0);
            }
        }
    }
    let tg = tensors_for::<f64>(&graph, &image, &grouped_cfg);
    let tf = tensors_for::<f64>(&graph, &image, &flat_cfg);
    let a = grouped_zero.forward(&tg).unwrap().preds;
    let b = flat.forward(&tf).unwrap().preds;
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn fully_frozen_backbone_is_bit_identical_after_training_step() {
    let (graph, image) = tiny_graph(53);
    let config = ModelConfig {
        backbone_freeze_depth: 4,
        ..ModelConfig::tiny(23)
    };
    let mut model: Model<f64> = Model::new(config.clone()).unwrap();
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let before: Vec<_> = model
        .store
        .entries()
        .iter()
        .filter(|e| matches!(e.group, mmresgnn_model::params::ParamGroup::VisualBackbone(_)))
        .map(|e| e.data.clone())
        .collect();
    let trainable = model.trainable_mask(false);
    let mut opt = mmresgnn_model::params::AdamW::new(&model.store, 1e-3, 1e-4);
    for _ in 0..3 {
        let mut grads = Grads::zeros_like(&model.store);
        model
            .loss_and_grads(&tensors, 1.0 / tensors.k() as f64, &mut grads)
            .unwrap();
        opt.step(&mut model.store, &grads, &trainable);
    }
    let after: Vec<_> = model
        .store
        .entries()
        .iter()
        .filter(|e| matches!(e.group, mmresgnn_model::params::ParamGroup::VisualBackbone(_)))
        .map(|e| e.data.clone())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn saturated_gate_ignores_visual_branch() {
    let (graph, image) = tiny_graph(54);
    let config = ModelConfig::tiny(19);
    let base: Model<f64> = Model::new(config.clone()).unwrap();
    let mut saturated = base.cast::<f64>();
    let mut other_visual = base.cast::<f64>();
    for m in [&mut saturated, &mut other_visual] {
        for i in 0..m.store.len() {
            let name = m.store.entries()[i].name.clone();
            if name == "fusion.gate.b" {
                m.store
                    .get_mut(mmresgnn_model::params::ParamId(i))
                    .mapv_inplace(|_| 1000.0);
            }
            if name == "fusion.gate.w" {
                m.store
                    .get_mut(mmresgnn_model::params::ParamId(i))
                    .mapv_inplace(|_| 0.0);
            }
        }
    }
    // Perturb only the visual branch of the second model.
    for i in 0..other_visual.store.len() {
        let name = other_visual.store.entries()[i].name.clone();
        if name.starts_with("visual.") {
            other_visual
                .store
                .get_mut(mmresgnn_model::params::ParamId(i))
                .mapv_inplace(|v| v + 0.37);
        }
    }
    let tensors = tensors_for::<f64>(&graph, &image, &config);
    let a = saturated.forward(&tensors).unwrap().preds;
    let b = other_visual.forward(&tensors).unwrap().preds;
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}
