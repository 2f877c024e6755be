//! Core pipeline for vehicular mmWave path-loss datasets: procedural scene
//! generation, a deterministic propagation oracle, physics-aware link
//! features, ESPL graph construction and the physical/empirical baselines.

pub mod baseline;
pub mod features;
pub mod graph;
pub mod grid;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod scene;
pub mod trajectory;

pub use baseline::{
    abg, baseline_pl, fit_abg, fit_baseline, fspl, reconstruct_pl, residual_target, umi_nlos,
    ABGParams, BaselineModel, LinkObservation,
};
pub use features::{
    blockage_ratio, bresenham_cells, dynamic_blocker_features, extract_link_features,
    FeatureParams, LinkFeatures, LinkType,
};
pub use graph::{build_espl_graph, knn_correlation_edges, select_k_nearest_rx, ESPLGraph, GraphConfig};
pub use grid::Grid;
pub use oracle::{oracle_path_loss, OracleParams};
pub use render::{render_ego_image, EgoImage};
pub use scene::{generate_scene, ScenarioKind, Scene, SceneConfig};
pub use trajectory::{simulate_trajectories, Snapshot, VehicleState};

use thiserror::Error;

/// Errors surfaced by scene generation, feature extraction, graph building
/// and the baseline models.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate link: Tx-Rx distance is zero")]
    DegenerateLink,
    #[error("grid cell ({0}, {1}) is outside the {2}x{3} grid")]
    OutOfBounds(i64, i64, usize, usize),
    #[error("requested {requested} nearest Rxs but only {available} are available")]
    InsufficientRx { requested: usize, available: usize },
    #[error("design matrix is rank deficient; regressors are collinear")]
    RankDeficient,
    #[error("{name} = {value} is outside the supported range [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("point ({0}, {1}, {2}) is not one of the scene Rx positions")]
    NotAnRxPosition(f64, f64, f64),
}

pub type Result<T> = std::result::Result<T, CoreError>;

/// 3D point in world coordinates (meters).
pub type Point3 = [f64; 3];

/// Euclidean distance between two 3D points.
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
