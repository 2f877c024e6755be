//! Experiment harness: vehicle-wise splits, metric computation, the training
//! loop, the closed variant registry and the cross-scenario transfer
//! protocols.

pub mod dataset;
pub mod evaluate;
pub mod metrics;
pub mod split;
pub mod train;
pub mod transfer;
pub mod variants;

pub use dataset::{generate_dataset, Dataset, DatasetSpec};
pub use evaluate::{evaluate_checkpoint, predictions_for};
pub use metrics::{compute_metrics, Metrics, MetricsReport, SplitKind};
pub use split::{vehicle_wise_split, SplitSpec};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
pub use transfer::{few_shot_vehicle_subset, run_transfer, TransferSpec, TransferStrategy};
pub use variants::{registry, run_variant, EmpiricalModel, Variant, VariantKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least {needed} vehicles, got {got}")]
    TooFewVehicles { needed: usize, got: usize },
    #[error("length mismatch: y has {y} entries, y_hat has {y_hat}")]
    LengthMismatch { y: usize, y_hat: usize },
    #[error("MAPE is undefined: reference value at index {0} is zero")]
    ZeroReference(usize),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite training loss {loss} at epoch {epoch}; aborting")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("unknown variant '{id}'; valid ids: {valid}")]
    UnknownVariant { id: String, valid: String },
    #[error("transfer strategy {0:?} requires a source checkpoint")]
    MissingCheckpoint(transfer::TransferStrategy),
    #[error("checkpoint baseline {ckpt} does not match dataset baseline {dataset}")]
    BaselineMismatch { ckpt: String, dataset: String },
    #[error("dataset has no fitted baseline; run the baseline fit first")]
    MissingBaseline,
    #[error(transparent)]
    Core(#[from] mmresgnn_core::CoreError),
    #[error(transparent)]
    Model(#[from] mmresgnn_model::ModelError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Worker pool sized by `MMRESGNN_NUM_WORKERS` (defaults to the machine
/// parallelism). All parallel reductions fold in deterministic order, so the
/// worker count never changes results.
pub fn worker_pool() -> rayon::ThreadPool {
    let workers = std::env::var("MMRESGNN_NUM_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool construction")
}
