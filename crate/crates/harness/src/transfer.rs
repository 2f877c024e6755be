//! Cross-scenario transfer: training from scratch, full fine-tuning, and
//! frozen-backbone head retraining, under few-shot subsampling of the
//! target-domain training vehicles.

use crate::dataset::Dataset;
use crate::evaluate::{predictions_for, split_indices};
use crate::metrics::{compute_metrics, MetricsReport, SplitKind};
use crate::split::SplitSpec;
use crate::train::{train_model, TrainConfig, TrainOutcome};
use crate::{HarnessError, Result};
use mmresgnn_core::rng::{rng_from_seed, subseed};
use mmresgnn_model::checkpoint::{load_checkpoint, RawTargetStats};
use mmresgnn_model::config::ModelConfig;
use mmresgnn_model::model::Model;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;

const STREAM_FEWSHOT: u64 = 0x4653_484f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferStrategy {
    Scratch,
    FullFinetune,
    FrozenBackbone,
}

impl std::str::FromStr for TransferStrategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scratch" => Ok(TransferStrategy::Scratch),
            "full" | "full_finetune" => Ok(TransferStrategy::FullFinetune),
            "frozen" | "frozen_backbone" => Ok(TransferStrategy::FrozenBackbone),
            other => Err(format!("unknown transfer strategy: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub strategy: TransferStrategy,
    pub source_checkpoint: Option<PathBuf>,
    /// Fraction of target training vehicles retained (0.05 to 1.0).
    pub target_ratio: f64,
    pub seed: u64,
}

impl TransferSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategy != TransferStrategy::Scratch && self.source_checkpoint.is_none() {
            return Err(HarnessError::MissingCheckpoint(self.strategy));
        }
        Ok(())
    }
}

/// Few-shot subset: ceil(ratio * n) vehicles with a floor of one, taken as a
/// prefix of a single seeded shuffle so smaller ratios nest inside larger
/// ones.
pub fn few_shot_vehicle_subset(train_ids: &BTreeSet<u32>, ratio: f64, seed: u64) -> BTreeSet<u32> {
    let mut order: Vec<u32> = train_ids.iter().copied().collect();
    let mut rng = rng_from_seed(subseed(seed, STREAM_FEWSHOT));
    order.shuffle(&mut rng);
    let keep = ((ratio * order.len() as f64).ceil() as usize).clamp(1, order.len());
    order.into_iter().take(keep).collect()
}

/// Run one transfer experiment on the target dataset and report test-split
/// metrics. `scratch_config` supplies the architecture for the scratch
/// strategy (fine-tuning strategies take theirs from the checkpoint).
pub fn run_transfer(
    spec: &TransferSpec,
    target: &Dataset,
    split: &SplitSpec,
    scratch_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Model<f32>, Option<RawTargetStats>, TrainOutcome, MetricsReport)> {
    spec.validate()?;
    let few_shot = few_shot_vehicle_subset(&split.train_vehicle_ids, spec.target_ratio, spec.seed);
    let effective_split = SplitSpec {
        train_vehicle_ids: few_shot,
        ..split.clone()
    };

    let mut tc = train_config.clone();
    let mut model: Model<f32> = match spec.strategy {
        TransferStrategy::Scratch => {
            let mut cfg = scratch_config.clone();
            cfg.image_size = target.spec.render_size;
            Model::new(cfg)?
        }
        TransferStrategy::FullFinetune | TransferStrategy::FrozenBackbone => {
            let path = spec.source_checkpoint.as_ref().unwrap();
            let ckpt = load_checkpoint(path)?;
            if spec.strategy == TransferStrategy::FrozenBackbone {
                tc.head_only = true;
            }
            ckpt.model
        }
    };

    let (raw_stats, outcome) = train_model(&mut model, target, &effective_split, &tc)?;

    let test_idx = split_indices(target, split, SplitKind::Test);
    if test_idx.is_empty() {
        return Err(HarnessError::EmptySplit("test"));
    }
    let (y, y_hat) =
        predictions_for(&model, target, &test_idx, target.baseline.as_ref(), raw_stats)?;
    let metrics = compute_metrics(&y, &y_hat)?;
    let mut report = MetricsReport::new("A0", SplitKind::Test, metrics);
    report.strategy = Some(format!("{:?}", spec.strategy));
    report.ratio = Some(spec.target_ratio);
    Ok((model, raw_stats, outcome, report))
}
