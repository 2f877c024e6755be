//! Manually invoked probes used to size the desk-scale experiments
//! (run with --ignored --nocapture).

use mmresgnn_core::scene::ScenarioKind;
use mmresgnn_harness::dataset::{generate_dataset, DatasetSpec};
use mmresgnn_harness::split::{vehicle_wise_split, SplitSpec, DEFAULT_RATIOS};
use mmresgnn_harness::train::{train, TrainConfig};
use mmresgnn_harness::{evaluate, metrics, variants};
use mmresgnn_model::config::ModelConfig;

#[test]
#[ignore]
fn time_one_training_step() {
    let mut spec = DatasetSpec::new(ScenarioKind::WideLane, 8, 3);
    spec.scene.num_vehicles = 8;
    let mut data = generate_dataset(&spec).unwrap();
    let all: Vec<usize> = (0..8).collect();
    let baseline = data.fit_baseline_on(&all).unwrap();
    data.attach_baseline(baseline);

    let config = ModelConfig {
        image_size: 64,
        ..ModelConfig::default()
    };
    let model: mmresgnn_model::model::Model<f32> =
        mmresgnn_model::model::Model::new(config.clone()).unwrap();
    let tensors: Vec<_> = (0..8)
        .map(|i| {
            mmresgnn_model::tensorize::tensorize_graph::<f32>(
                &data.graphs[i],
                &data.images[i],
                &config,
                Some(mmresgnn_model::tensorize::TargetMode::Residual),
            )
            .unwrap()
        })
        .collect();
    let mut grads = mmresgnn_model::params::Grads::zeros_like(&model.store);
    let t0 = std::time::Instant::now();
    let reps = 10;
    for _ in 0..reps {
        for t in &tensors {
            model.loss_and_grads(t, 1.0 / 400.0, &mut grads).unwrap();
        }
    }
    let per_graph = t0.elapsed() / (reps * 8) as u32;
    println!("fwd+bwd per graph: {per_graph:?} (params: {})", model.store.num_scalars());

    let t1 = std::time::Instant::now();
    for t in &tensors {
        model.forward(t).unwrap();
    }
    println!("fwd per graph: {:?}", t1.elapsed() / 8);
}

#[test]
#[ignore]
fn overfit_probe_eight_snapshots() {
    let spec = DatasetSpec::new(ScenarioKind::WideLane, 8, 11);
    let mut data = generate_dataset(&spec).unwrap();
    let all: Vec<usize> = (0..8).collect();
    let baseline = data.fit_baseline_on(&all).unwrap();
    data.attach_baseline(baseline);

    let split = SplitSpec::all_train(data.vehicle_ids());
    let model_config = ModelConfig {
        image_size: 64,
        seed: 5,
        ..ModelConfig::default()
    };
    let lr: f64 = std::env::var("PROBE_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(5e-4);
    let bs: usize = std::env::var("PROBE_BS").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    // 8 graphs per epoch -> (8 / bs) optimizer steps per epoch; cap at 500 steps.
    let epochs = 500 * bs / 8;
    let train_config = TrainConfig {
        epochs,
        batch_size: bs,
        learning_rate: lr,
        plateau_patience: 1000,
        early_stop_patience: 1000,
        stop_below_mae: Some(1.0),
        seed: 5,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (_model, _stats, outcome) = train(&data, &split, &model_config, &train_config).unwrap();
    println!(
        "overfit: best train/val MAE {:.3} dB after {} epochs in {:?}",
        outcome.best_val_mae,
        outcome.history.len(),
        t0.elapsed()
    );
    for rec in outcome.history.iter().step_by(10) {
        println!(
            "  epoch {:3}: loss {:.4}, mae {:.3}, lr {:.2e}",
            rec.epoch, rec.train_loss, rec.val_mae, rec.lr
        );
    }
    assert!(outcome.best_val_mae < 1.0);
}

#[test]
#[ignore]
fn small_end_to_end_trend() {
    // Scaled-down version of the end-to-end experiment to check that the
    // learned model beats the physical baseline on held-out vehicles.
    let spec = DatasetSpec::new(ScenarioKind::WideLane, 150, 7);
    let mut data = generate_dataset(&spec).unwrap();
    let ids = data.vehicle_ids();
    let split = vehicle_wise_split(&ids, DEFAULT_RATIOS, 7).unwrap();
    let train_idx = data.indices_for(&split.train_vehicle_ids);
    let test_idx = data.indices_for(&split.test_vehicle_ids);
    let baseline = data.fit_baseline_on(&train_idx).unwrap();
    data.attach_baseline(baseline);

    let v = variants::lookup("C0").unwrap();
    let (y, y_hat) =
        variants::analytic_predictions(&data, &test_idx, &v.kind, &Default::default()).unwrap();
    let c0 = metrics::compute_metrics(&y, &y_hat).unwrap();
    println!("C0 test MAE {:.4}", c0.mae);

    let model_config = ModelConfig {
        image_size: 64,
        seed: 7,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        epochs: 25,
        seed: 7,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model, stats, outcome) = train(&data, &split, &model_config, &train_config).unwrap();
    println!("training took {:?}", t0.elapsed());
    for rec in outcome.history.iter() {
        println!(
            "  epoch {:3}: train loss {:.4}, val loss {:.4}, val mae {:.3}, lr {:.2e}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.val_mae, rec.lr
        );
    }
    let (y, y_hat) =
        evaluate::predictions_for(&model, &data, &test_idx, data.baseline.as_ref(), stats).unwrap();
    let a0 = metrics::compute_metrics(&y, &y_hat).unwrap();
    println!(
        "A0 test MAE {:.4} vs C0 {:.4} (ratio {:.3})",
        a0.mae,
        c0.mae,
        a0.mae / c0.mae
    );
}

#[test]
#[ignore]
fn full_end_to_end() {
    // The full desk-scale experiment configuration.
    let spec = DatasetSpec::new(ScenarioKind::WideLane, 500, 7);
    let t0 = std::time::Instant::now();
    let mut data = generate_dataset(&spec).unwrap();
    let ids = data.vehicle_ids();
    let split = vehicle_wise_split(&ids, DEFAULT_RATIOS, 7).unwrap();
    let train_idx = data.indices_for(&split.train_vehicle_ids);
    let test_idx = data.indices_for(&split.test_vehicle_ids);
    let baseline = data.fit_baseline_on(&train_idx).unwrap();
    data.attach_baseline(baseline);

    for id in ["C0", "C1_fspl"] {
        let v = variants::lookup(id).unwrap();
        let (y, y_hat) =
            variants::analytic_predictions(&data, &test_idx, &v.kind, &Default::default()).unwrap();
        let m = metrics::compute_metrics(&y, &y_hat).unwrap();
        println!("{id}: test MAE {:.4}", m.mae);
    }

    let model_config = ModelConfig {
        image_size: 64,
        seed: 7,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        epochs: 60,
        seed: 7,
        ..TrainConfig::default()
    };
    let (model, stats, outcome) = train(&data, &split, &model_config, &train_config).unwrap();
    for rec in outcome.history.iter() {
        println!(
            "  epoch {:3}: train loss {:.4}, val loss {:.4}, val mae {:.3}, lr {:.2e}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.val_mae, rec.lr
        );
    }
    let (y, y_hat) =
        evaluate::predictions_for(&model, &data, &test_idx, data.baseline.as_ref(), stats).unwrap();
    let a0 = metrics::compute_metrics(&y, &y_hat).unwrap();
    println!("A0 test MAE {:.4} (total {:?})", a0.mae, t0.elapsed());
}

#[test]
#[ignore]
fn bresenham_deviation_structured_masks() {
    use mmresgnn_core::features::blockage_ratio;
    use mmresgnn_core::grid::Grid;
    use mmresgnn_core::rng::rng_from_seed;
    use rand::Rng;
    let mut rng = rng_from_seed(202);
    let size = 64usize;
    let mut worst_block = 0.0f64;
    let mut worst_scene = 0.0f64;
    // Block masks: random rectangles.
    for trial in 0..1000 {
        let mut mask: Grid<u8> = Grid::new(size, size);
        let rects = 3 + trial % 8;
        for _ in 0..rects {
            let x0 = rng.random_range(0..size - 8);
            let y0 = rng.random_range(0..size - 8);
            let w = rng.random_range(4..18).min(size - x0);
            let h = rng.random_range(4..18).min(size - y0);
            for y in y0..y0 + h { for x in x0..x0 + w { mask.set(y, x, 1); } }
        }
        let (a, b) = loop {
            let a = [rng.random_range(0.5..size as f64 - 0.5), rng.random_range(0.5..size as f64 - 0.5), 2.0];
            let b = [rng.random_range(0.5..size as f64 - 0.5), rng.random_range(0.5..size as f64 - 0.5), 1.5];
            let d: f64 = (b[0]-a[0]).hypot(b[1]-a[1]);
            if d >= 24.0 { break (a, b); }
        };
        let fast = blockage_ratio(&mask, &a, &b, 1.0).unwrap();
        let cell_of = |p: &[f64; 3]| ((p[0]).floor() as i64, (p[1]).floor() as i64);
        let (ca, cb) = (cell_of(&a), cell_of(&b));
        let mut hit = 0usize; let mut total = 0usize;
        for i in 0..256 {
            let t = (i as f64 + 0.5) / 256.0;
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            let cell = (x.floor() as i64, y.floor() as i64);
            if cell == ca || cell == cb { continue; }
            total += 1;
            if mask.get(cell.1 as usize, cell.0 as usize) != 0 { hit += 1; }
        }
        let dense = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
        worst_block = worst_block.max((fast - dense).abs());
    }
    println!("block masks worst deviation: {worst_block:.4}");

    // Scene masks (building + tree from generated scenes).
    use mmresgnn_core::scene::{generate_scene, ScenarioKind, SceneConfig};
    for seed in 0..10u64 {
        for kind in [ScenarioKind::WideLane, ScenarioKind::Crossroad, ScenarioKind::ForkingRoad] {
            let scene = generate_scene(&SceneConfig::for_scenario(kind, seed)).unwrap();
            for (mask, _name) in [(&scene.building_mask, "b"), (&scene.tree_mask, "t")] {
                for _ in 0..17 {
                    let s: f64 = 128.0;
                    let (a, b) = loop {
                        let a = [rng.random_range(0.5..s - 0.5), rng.random_range(0.5..s - 0.5), 2.0];
                        let b = [rng.random_range(0.5..s - 0.5), rng.random_range(0.5..s - 0.5), 1.5];
                        let d: f64 = (b[0]-a[0]).hypot(b[1]-a[1]);
                        if d >= 24.0 { break (a, b); }
                    };
                    let fast = blockage_ratio(mask, &a, &b, 1.0).unwrap();
                    let cell_of = |p: &[f64; 3]| ((p[0]).floor() as i64, (p[1]).floor() as i64);
                    let (ca, cb) = (cell_of(&a), cell_of(&b));
                    let mut hit = 0usize; let mut total = 0usize;
                    for i in 0..256 {
                        let t = (i as f64 + 0.5) / 256.0;
                        let x = a[0] + t * (b[0] - a[0]);
                        let y = a[1] + t * (b[1] - a[1]);
                        let cell = (x.floor() as i64, y.floor() as i64);
                        if cell == ca || cell == cb { continue; }
                        total += 1;
                        if mask.get(cell.1 as usize, cell.0 as usize) != 0 { hit += 1; }
                    }
                    let dense = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
                    worst_scene = worst_scene.max((fast - dense).abs());
                }
            }
        }
    }
    println!("scene masks worst deviation: {worst_scene:.4}");
}
