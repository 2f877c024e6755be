//! Model configuration and the feature-mask ablation mechanism.

use crate::{ModelError, Result};
use mmresgnn_core::features::{GROUP_RANGES, IDX_COS_PHI, IDX_SIN_PHI, IDX_V_NORM, NUM_FEATURES};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    CompactCnn,
    DeepCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Gated,
    Concat,
    CrossAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnOperator {
    EdgeTransformer,
    Gcn,
    Gat,
}

/// Per-feature input mask; false entries are zeroed before edge encoding.
/// Group helpers cover the six feature groups; the direction and speed
/// sub-masks cover the finer ablations within G5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub keep: [bool; NUM_FEATURES],
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self {
            keep: [true; NUM_FEATURES],
        }
    }
}

impl FeatureMask {
    pub fn all() -> Self {
        Self::default()
    }

    /// Mask out one of the six groups (0-based).
    pub fn without_group(group: usize) -> Self {
        let mut mask = Self::all();
        let (lo, hi) = GROUP_RANGES[group];
        for i in lo..hi {
            mask.keep[i] = false;
        }
        mask
    }

    /// Mask the directional features cos(phi), sin(phi).
    pub fn without_direction() -> Self {
        let mut mask = Self::all();
        mask.keep[IDX_COS_PHI] = false;
        mask.keep[IDX_SIN_PHI] = false;
        mask
    }

    /// Mask the Tx speed feature.
    pub fn without_speed() -> Self {
        let mut mask = Self::all();
        mask.keep[IDX_V_NORM] = false;
        mask
    }

    pub fn is_full(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }
}

/// Architecture hyperparameters and variant flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Output width of each of the six group encoders; their sum must be at
    /// least hidden_dim before the fused projection.
    pub edge_group_dims: [usize; 6],
    pub visual_feature_dim: usize,
    pub backbone: BackboneKind,
    /// Number of leading backbone stages excluded from training.
    pub backbone_freeze_depth: usize,
    pub fusion: FusionKind,
    pub gnn_operator: GnnOperator,
    pub use_visual: bool,
    pub use_correlation_edges: bool,
    pub direct_regression: bool,
    pub flat_edge_encoder: bool,
    /// Vision-only degenerate configuration (no graph branch at all).
    pub vision_only: bool,
    pub feature_mask: FeatureMask,
    /// Ego image side length the visual branch expects.
    pub image_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            num_layers: 3,
            num_heads: 4,
            edge_group_dims: [24; 6],
            visual_feature_dim: 128,
            backbone: BackboneKind::CompactCnn,
            backbone_freeze_depth: 0,
            fusion: FusionKind::Gated,
            gnn_operator: GnnOperator::EdgeTransformer,
            use_visual: true,
            use_correlation_edges: true,
            direct_regression: false,
            flat_edge_encoder: false,
            vision_only: false,
            feature_mask: FeatureMask::all(),
            image_size: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn group_dim_sum(&self) -> usize {
        self.edge_group_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_heads == 0 {
            return Err(ModelError::InvalidConfig("hidden_dim and num_heads must be > 0".into()));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_dim {} must be divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.edge_group_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::InvalidConfig("edge group dims must be > 0".into()));
        }
        if self.group_dim_sum() < self.hidden_dim {
            return Err(ModelError::InvalidConfig(format!(
                "edge group dims sum {} must be >= hidden_dim {}",
                self.group_dim_sum(),
                self.hidden_dim
            )));
        }
        if self.visual_feature_dim == 0 || self.visual_feature_dim % 8 != 0 {
            return Err(ModelError::InvalidConfig(
                "visual_feature_dim must be a positive multiple of 8".into(),
            ));
        }
        if self.image_size < 16 || self.image_size % 16 != 0 {
            return Err(ModelError::InvalidConfig(
                "image_size must be a multiple of 16 and at least 16".into(),
            ));
        }
        if self.vision_only && !self.use_visual {
            return Err(ModelError::InvalidConfig(
                "vision_only requires use_visual".into(),
            ));
        }
        Ok(())
    }

    /// Tiny instance used by gradient verification.
    pub fn tiny(seed: u64) -> Self {
        Self {
            hidden_dim: 8,
            num_layers: 1,
            num_heads: 2,
            edge_group_dims: [2; 6],
            visual_feature_dim: 16,
            image_size: 16,
            seed,
            ..Self::default()
        }
    }
}
