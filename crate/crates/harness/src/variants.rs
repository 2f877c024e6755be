//! The closed variant registry: the physical baseline C0, empirical
//! references C1_*, data-driven baselines C2-C4, the full model A0, its
//! mechanism/feature/fusion ablations A1-A10 and the GNN operator variants
//! V1-V2.

use crate::dataset::Dataset;
use crate::evaluate::{predictions_for, split_indices};
use crate::metrics::{compute_metrics, MetricsReport, SplitKind};
use crate::split::SplitSpec;
use crate::train::{train, TrainConfig};
use crate::{HarnessError, Result};
use mmresgnn_core::baseline::{abg, baseline_pl_log, fspl, umi_nlos, ABGParams};
use mmresgnn_model::config::{BackboneKind, FeatureMask, FusionKind, GnnOperator, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmpiricalModel {
    Fspl,
    Abg,
    Umi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantKind {
    /// The fitted physical baseline as the predictor; no training.
    BaselineOnly,
    /// Closed-form empirical model; no training.
    Empirical(EmpiricalModel),
    /// A trained network with the given configuration patch.
    Learned(ModelConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub id: &'static str,
    pub description: &'static str,
    pub kind: VariantKind,
}

fn base_config() -> ModelConfig {
    ModelConfig::default()
}

/// The full, ordered, closed variant set.
pub fn registry() -> Vec<Variant> {
    let mut v = Vec::new();
    v.push(Variant {
        id: "C0",
        description: "Physical baseline (least-squares fit)",
        kind: VariantKind::BaselineOnly,
    });
    v.push(Variant {
        id: "C1_fspl",
        description: "Free-space path loss",
        kind: VariantKind::Empirical(EmpiricalModel::Fspl),
    });
    v.push(Variant {
        id: "C1_abg",
        description: "Alpha-beta-gamma empirical model",
        kind: VariantKind::Empirical(EmpiricalModel::Abg),
    });
    v.push(Variant {
        id: "C1_umi",
        description: "3GPP TR 38.901 UMi street canyon (NLoS)",
        kind: VariantKind::Empirical(EmpiricalModel::Umi),
    });
    v.push(Variant {
        id: "C2",
        description: "Geometry-driven MLP on edge features",
        kind: VariantKind::Learned(ModelConfig {
            flat_edge_encoder: true,
            num_layers: 0,
            use_visual: false,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "C3",
        description: "Vision-only regressor (visual embedding + log distance)",
        kind: VariantKind::Learned(ModelConfig {
            vision_only: true,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "C4",
        description: "Uni-modal geometric GNN (no visual branch)",
        kind: VariantKind::Learned(ModelConfig {
            use_visual: false,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A0",
        description: "Full multi-modal residual-corrected GNN",
        kind: VariantKind::Learned(base_config()),
    });
    v.push(Variant {
        id: "A1",
        description: "Direct regression (no residual decoupling)",
        kind: VariantKind::Learned(ModelConfig {
            direct_regression: true,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A2",
        description: "Without Rx-Rx correlation edges",
        kind: VariantKind::Learned(ModelConfig {
            use_correlation_edges: false,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A3",
        description: "Without directional features",
        kind: VariantKind::Learned(ModelConfig {
            feature_mask: FeatureMask::without_direction(),
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A4",
        description: "Without the Tx speed feature",
        kind: VariantKind::Learned(ModelConfig {
            feature_mask: FeatureMask::without_speed(),
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A5",
        description: "Without dynamic blocker features",
        kind: VariantKind::Learned(ModelConfig {
            feature_mask: FeatureMask::without_group(2),
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A6",
        description: "Without static obstacle features",
        kind: VariantKind::Learned(ModelConfig {
            feature_mask: FeatureMask::without_group(1),
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A7",
        description: "Flat edge encoder (no physics grouping)",
        kind: VariantKind::Learned(ModelConfig {
            flat_edge_encoder: true,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A8",
        description: "Concatenation fusion",
        kind: VariantKind::Learned(ModelConfig {
            fusion: FusionKind::Concat,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A9",
        description: "Cross-attention fusion",
        kind: VariantKind::Learned(ModelConfig {
            fusion: FusionKind::CrossAttention,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "A10",
        description: "Deeper visual backbone",
        kind: VariantKind::Learned(ModelConfig {
            backbone: BackboneKind::DeepCnn,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "V1",
        description: "GCN-based multi-modal variant",
        kind: VariantKind::Learned(ModelConfig {
            gnn_operator: GnnOperator::Gcn,
            ..base_config()
        }),
    });
    v.push(Variant {
        id: "V2",
        description: "GAT-based multi-modal variant",
        kind: VariantKind::Learned(ModelConfig {
            gnn_operator: GnnOperator::Gat,
            ..base_config()
        }),
    });
    v
}

pub fn valid_ids() -> Vec<&'static str> {
    registry().iter().map(|v| v.id).collect()
}

pub fn lookup(id: &str) -> Result<Variant> {
    registry()
        .into_iter()
        .find(|v| v.id == id)
        .ok_or_else(|| HarnessError::UnknownVariant {
            id: id.to_string(),
            valid: valid_ids().join(", "),
        })
}

/// Closed-form or baseline predictions over a set of graph indices.
pub fn analytic_predictions(
    dataset: &Dataset,
    indices: &[usize],
    kind: &VariantKind,
    abg_params: &ABGParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fc = dataset.spec.scene.carrier_freq;
    let h_ut = dataset.spec.scene.rx_height;
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    for &gi in indices {
        for e in &dataset.graphs[gi].transmission_edges {
            let d = 10f64.powf(e.features.log_dist());
            let pl_hat = match kind {
                VariantKind::BaselineOnly => {
                    let b = dataset.baseline.as_ref().ok_or(HarnessError::MissingBaseline)?;
                    baseline_pl_log(
                        b,
                        e.features.log_dist(),
                        e.features.r_building(),
                        e.features.r_tree(),
                        e.features.i_dyn(),
                    )
                }
                VariantKind::Empirical(EmpiricalModel::Fspl) => fspl(d, fc)?,
                VariantKind::Empirical(EmpiricalModel::Abg) => abg(d, fc, abg_params)?,
                VariantKind::Empirical(EmpiricalModel::Umi) => umi_nlos(d, fc, h_ut)?,
                VariantKind::Learned(_) => unreachable!("learned variants require training"),
            };
            y.push(e.pl_raw);
            y_hat.push(pl_hat);
        }
    }
    Ok((y, y_hat))
}

/// Train (where applicable) and evaluate one variant on a split subset.
pub fn run_variant(
    id: &str,
    dataset: &Dataset,
    split: &SplitSpec,
    which: SplitKind,
    train_config: &TrainConfig,
    abg_params: &ABGParams,
) -> Result<MetricsReport> {
    let variant = lookup(id)?;
    let indices = split_indices(dataset, split, which);
    if indices.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    let metrics = match &variant.kind {
        VariantKind::BaselineOnly | VariantKind::Empirical(_) => {
            let (y, y_hat) = analytic_predictions(dataset, &indices, &variant.kind, abg_params)?;
            compute_metrics(&y, &y_hat)?
        }
        VariantKind::Learned(config) => {
            let mut config = config.clone();
            config.image_size = dataset.spec.render_size;
            config.seed = train_config.seed;
            let (model, raw_stats, _outcome) = train(dataset, split, &config, train_config)?;
            let (y, y_hat) =
                predictions_for(&model, dataset, &indices, dataset.baseline.as_ref(), raw_stats)?;
            compute_metrics(&y, &y_hat)?
        }
    };
    Ok(MetricsReport::new(variant.id, which, metrics))
}
