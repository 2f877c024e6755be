//! Model evaluation: dB-scale predictions via residual reconstruction (or
//! de-standardization for direct-regression variants) and metric reports.

use crate::dataset::Dataset;
use crate::metrics::{compute_metrics, Metrics, SplitKind};
use crate::split::SplitSpec;
use crate::{HarnessError, Result};
use mmresgnn_core::baseline::{baseline_pl_log, reconstruct_pl, BaselineModel};
use mmresgnn_model::checkpoint::{Checkpoint, RawTargetStats};
use mmresgnn_model::model::Model;
use mmresgnn_model::tensorize::tensorize_graph;

/// Ground truth and dB-scale predictions for the given graph indices.
pub fn predictions_for(
    model: &Model<f32>,
    dataset: &Dataset,
    indices: &[usize],
    baseline: Option<&BaselineModel>,
    raw_stats: Option<RawTargetStats>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    for &gi in indices {
        let graph = &dataset.graphs[gi];
        let tensors = tensorize_graph::<f32>(graph, &dataset.images[gi], &model.config, None)?;
        let cache = model.forward(&tensors)?;
        for (i, e) in graph.transmission_edges.iter().enumerate() {
            let pred = f64::from(cache.preds[i]);
            let pl_hat = if model.config.direct_regression {
                let stats = raw_stats.ok_or(HarnessError::MissingBaseline)?;
                pred * stats.sigma + stats.mu
            } else {
                let b = baseline.ok_or(HarnessError::MissingBaseline)?;
                let pl_base = baseline_pl_log(
                    b,
                    e.features.log_dist(),
                    e.features.r_building(),
                    e.features.r_tree(),
                    e.features.i_dyn(),
                );
                reconstruct_pl(pl_base, pred, b.mu_res, b.sigma_res)
            };
            y.push(e.pl_raw);
            y_hat.push(pl_hat);
        }
    }
    Ok((y, y_hat))
}

/// Graph indices belonging to one side of a split.
pub fn split_indices(dataset: &Dataset, split: &SplitSpec, which: SplitKind) -> Vec<usize> {
    let ids = match which {
        SplitKind::Train => &split.train_vehicle_ids,
        SplitKind::Val => &split.val_vehicle_ids,
        SplitKind::Test => &split.test_vehicle_ids,
    };
    dataset.indices_for(ids)
}

/// Evaluate a checkpoint on one side of a split. The checkpoint's embedded
/// baseline must match the dataset's fitted baseline when both exist.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    split: &SplitSpec,
    which: SplitKind,
) -> Result<Metrics> {
    if let (Some(cb), Some(db)) = (&ckpt.baseline, &dataset.baseline) {
        if cb.id() != db.id() {
            return Err(HarnessError::BaselineMismatch {
                ckpt: cb.id(),
                dataset: db.id(),
            });
        }
    }
    let indices = split_indices(dataset, split, which);
    if indices.is_empty() {
        return Err(HarnessError::EmptySplit(match which {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }));
    }
    let (y, y_hat) = predictions_for(
        &ckpt.model,
        dataset,
        &indices,
        ckpt.baseline.as_ref(),
        ckpt.raw_stats,
    )?;
    compute_metrics(&y, &y_hat)
}
