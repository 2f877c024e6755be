//! Mini-batch training: MSE on normalized residuals, AdamW with decoupled
//! weight decay, plateau learning-rate scheduling on validation MAE, early
//! stopping, and best-validation checkpointing. Fully deterministic for a
//! fixed seed: shuffles, initialization and gradient reduction order are all
//! seed-derived and worker-count independent.

use crate::dataset::Dataset;
use crate::evaluate::split_indices;
use crate::metrics::SplitKind;
use crate::split::SplitSpec;
use crate::{worker_pool, HarnessError, Result};
use mmresgnn_core::baseline::reconstruct_pl;
use mmresgnn_core::rng::{rng_from_seed, subseed_n};
use mmresgnn_model::checkpoint::RawTargetStats;
use mmresgnn_model::config::ModelConfig;
use mmresgnn_model::model::Model;
use mmresgnn_model::params::{AdamW, Grads, ParamStore};
use mmresgnn_model::tensorize::{tensorize_graph, GraphTensors, TargetMode};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Graphs per deterministic gradient-accumulation chunk.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub min_lr: f64,
    pub seed: u64,
    /// Train only the regression head and fusion gate (frozen-backbone
    /// transfer strategy).
    pub head_only: bool,
    /// Stop as soon as the validation MAE (dB) drops below this threshold;
    /// used by capacity probes.
    pub stop_below_mae: Option<f64>,
}

impl Default for TrainConfig {
    /// Desk-scale defaults; the reference protocol uses 200 epochs.
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 5e-5,
            epochs: 60,
            batch_size: 32,
            plateau_factor: 0.5,
            plateau_patience: 10,
            early_stop_patience: 20,
            min_lr: 1e-6,
            seed: 0,
            head_only: false,
            stop_below_mae: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.weight_decay < 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || !(0.0..1.0).contains(&self.plateau_factor)
        {
            return Err(HarnessError::Model(mmresgnn_model::ModelError::InvalidConfig(
                "hyperparameters must be positive (plateau factor in (0,1))".into(),
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

/// Train a freshly initialized model.
pub fn train(
    dataset: &Dataset,
    split: &SplitSpec,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Model<f32>, Option<RawTargetStats>, TrainOutcome)> {
    let mut model: Model<f32> = Model::new(model_config.clone())?;
    let (stats, outcome) = train_model(&mut model, dataset, split, train_config)?;
    Ok((model, stats, outcome))
}

/// Train an existing model in place (fine-tuning entry point). Returns the
/// raw-target statistics used for direct-regression variants and the
/// training history; the model is left at its best-validation parameters.
pub fn train_model(
    model: &mut Model<f32>,
    dataset: &Dataset,
    split: &SplitSpec,
    train_config: &TrainConfig,
) -> Result<(Option<RawTargetStats>, TrainOutcome)> {
    train_config.validate()?;
    let train_idx = split_indices(dataset, split, SplitKind::Train);
    if train_idx.is_empty() {
        return Err(HarnessError::EmptySplit("train"));
    }
    // Capacity probes may run without a validation split; they fall back to
    // scheduling on the training set.
    let val_idx = {
        let v = split_indices(dataset, split, SplitKind::Val);
        if v.is_empty() {
            train_idx.clone()
        } else {
            v
        }
    };

    let (target_mode, raw_stats) = if model.config.direct_regression {
        let stats = dataset.raw_stats_on(&train_idx)?;
        (
            TargetMode::StandardizedRaw {
                mu: stats.mu,
                sigma: stats.sigma,
            },
            Some(stats),
        )
    } else {
        if dataset.baseline.is_none() {
            return Err(HarnessError::MissingBaseline);
        }
        (TargetMode::Residual, None)
    };

    let tensorize_all = |indices: &[usize]| -> Result<Vec<GraphTensors<f32>>> {
        indices
            .iter()
            .map(|&i| {
                Ok(tensorize_graph(
                    &dataset.graphs[i],
                    &dataset.images[i],
                    &model.config,
                    Some(target_mode),
                )?)
            })
            .collect()
    };
    let train_tensors = tensorize_all(&train_idx)?;
    let val_tensors = tensorize_all(&val_idx)?;

    let trainable = model.trainable_mask(train_config.head_only);
    let mut optimizer = AdamW::new(&model.store, train_config.learning_rate, train_config.weight_decay);
    let pool = worker_pool();

    let mut history = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(usize, f64, ParamStore<f32>)> = None;
    let mut epochs_since_improvement = 0usize;
    let mut plateau_counter = 0usize;

    for epoch in 0..train_config.epochs {
        let mut order: Vec<usize> = (0..train_tensors.len()).collect();
        let mut rng = rng_from_seed(subseed_n(train_config.seed, &[0x45504f43, epoch as u64]));
        order.shuffle(&mut rng);

        let mut epoch_sse = 0.0;
        let mut epoch_edges = 0usize;
        for batch in order.chunks(train_config.batch_size) {
            let batch_edges: usize = batch.iter().map(|&i| train_tensors[i].k()).sum();
            let inv = 1.0 / batch_edges as f32;
            let chunk_grads: Vec<Result<(f64, Grads<f32>)>> = pool.install(|| {
                batch
                    .par_chunks(GRAD_CHUNK)
                    .map(|chunk| {
                        let mut grads = Grads::zeros_like(&model.store);
                        let mut sse = 0.0;
                        for &gi in chunk {
                            sse += model.loss_and_grads(&train_tensors[gi], inv, &mut grads)?;
                        }
                        Ok((sse, grads))
                    })
                    .collect()
            });
            let mut total = Grads::zeros_like(&model.store);
            let mut batch_sse = 0.0;
            for item in chunk_grads {
                let (sse, grads) = item?;
                batch_sse += sse;
                total.add_assign(&grads);
            }
            let batch_loss = batch_sse / batch_edges as f64;
            if !batch_loss.is_finite() {
                return Err(HarnessError::NonFiniteLoss {
                    epoch,
                    loss: batch_loss,
                });
            }
            optimizer.step(&mut model.store, &total, &trainable);
            epoch_sse += batch_sse;
            epoch_edges += batch_edges;
        }
        let train_loss = epoch_sse / epoch_edges as f64;

        let (val_loss, val_mae) = validation_metrics(model, &val_tensors, dataset, raw_stats, &pool)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_mae,
            lr: optimizer.lr,
        });

        let improved = best.as_ref().map(|(_, mae, _)| val_mae < *mae).unwrap_or(true);
        if improved {
            best = Some((epoch, val_mae, model.store.clone()));
            epochs_since_improvement = 0;
            plateau_counter = 0;
        }
        if let Some(target) = train_config.stop_below_mae {
            if val_mae < target {
                break;
            }
        }
        if !improved {
            epochs_since_improvement += 1;
            plateau_counter += 1;
            if plateau_counter >= train_config.plateau_patience {
                optimizer.lr = (optimizer.lr * train_config.plateau_factor).max(train_config.min_lr);
                plateau_counter = 0;
            }
            if epochs_since_improvement >= train_config.early_stop_patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_mae, best_store) = best.expect("at least one epoch ran");
    model.store = best_store;
    Ok((
        raw_stats,
        TrainOutcome {
            history,
            best_epoch,
            best_val_mae,
        },
    ))
}

/// Validation loss on normalized targets and MAE on reconstructed dB values.
fn validation_metrics(
    model: &Model<f32>,
    tensors: &[GraphTensors<f32>],
    dataset: &Dataset,
    raw_stats: Option<RawTargetStats>,
    pool: &rayon::ThreadPool,
) -> Result<(f64, f64)> {
    let per_graph: Vec<Result<(f64, f64, usize)>> = pool.install(|| {
        tensors
            .par_iter()
            .map(|t| {
                let cache = model.forward(t)?;
                let targets = t.targets.as_ref().expect("targets present");
                let mut sse = 0.0;
                let mut abs = 0.0;
                for i in 0..t.k() {
                    let pred = f64::from(cache.preds[i]);
                    let r = pred - f64::from(targets[i]);
                    sse += r * r;
                    let pl_hat = if model.config.direct_regression {
                        let stats = raw_stats.expect("raw stats for direct regression");
                        pred * stats.sigma + stats.mu
                    } else {
                        let b = dataset.baseline.as_ref().expect("baseline attached");
                        reconstruct_pl(t.pl_base[i], pred, b.mu_res, b.sigma_res)
                    };
                    abs += (pl_hat - t.pl_raw[i]).abs();
                }
                Ok((sse, abs, t.k()))
            })
            .collect()
    });
    let mut sse = 0.0;
    let mut abs = 0.0;
    let mut n = 0usize;
    for item in per_graph {
        let (s, a, k) = item?;
        sse += s;
        abs += a;
        n += k;
    }
    Ok((sse / n as f64, abs / n as f64))
}
