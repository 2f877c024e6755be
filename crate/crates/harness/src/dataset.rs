//! In-memory dataset: the generated scene metadata, per-snapshot graphs and
//! ego images, and the fitted baseline.

use crate::{worker_pool, HarnessError, Result};
use mmresgnn_core::baseline::{fit_baseline_rows, BaselineModel};
use mmresgnn_core::features::FeatureParams;
use mmresgnn_core::graph::{attach_baseline, build_espl_graph, ESPLGraph, GraphConfig};
use mmresgnn_core::oracle::OracleParams;
use mmresgnn_core::render::{render_ego_image, EgoImage};
use mmresgnn_core::rng::subseed;
use mmresgnn_core::scene::{generate_scene, ScenarioKind, SceneConfig};
use mmresgnn_core::trajectory::simulate_trajectories;
use mmresgnn_model::checkpoint::RawTargetStats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Everything needed to regenerate a dataset deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scene: SceneConfig,
    pub oracle: OracleParams,
    pub graph: GraphConfig,
    pub features: FeatureParams,
    pub render_size: usize,
    pub num_snapshots: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(kind: ScenarioKind, num_snapshots: usize, seed: u64) -> Self {
        Self {
            scene: SceneConfig::for_scenario(kind, seed),
            oracle: OracleParams::default(),
            graph: GraphConfig::default(),
            features: FeatureParams::default(),
            render_size: 64,
            num_snapshots,
            seed,
        }
    }

    /// Sub-seeds derived from the root seed.
    pub fn derived_seeds(&self) -> DerivedSeeds {
        DerivedSeeds {
            scene: subseed(self.seed, 1),
            trajectory: subseed(self.seed, 2),
            noise: subseed(self.seed, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub scene: u64,
    pub trajectory: u64,
    pub noise: u64,
}

/// A generated (or loaded) dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub scene: mmresgnn_core::scene::Scene,
    pub snapshots: Vec<mmresgnn_core::trajectory::Snapshot>,
    pub graphs: Vec<ESPLGraph>,
    pub images: Vec<EgoImage>,
    pub baseline: Option<BaselineModel>,
}

/// Run the full generation pipeline for a spec. Deterministic: the same
/// spec always produces identical graphs, images and labels.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let seeds = spec.derived_seeds();
    let mut scene_config = spec.scene.clone();
    scene_config.seed = seeds.scene;
    let scene = generate_scene(&scene_config)?;
    let snapshots = simulate_trajectories(&scene, spec.num_snapshots, seeds.trajectory)?;
    let mut oracle = spec.oracle;
    oracle.noise_seed = seeds.noise;

    let pool = worker_pool();
    let results: Vec<Result<(ESPLGraph, EgoImage)>> = pool.install(|| {
        snapshots
            .par_iter()
            .map(|snap| {
                let graph =
                    build_espl_graph(&scene, snap, &oracle, None, &spec.graph, &spec.features)?;
                let image = render_ego_image(&scene, snap, spec.render_size, spec.features.window)?;
                Ok((graph, image))
            })
            .collect()
    });
    let mut graphs = Vec::with_capacity(snapshots.len());
    let mut images = Vec::with_capacity(snapshots.len());
    for r in results {
        let (g, i) = r?;
        graphs.push(g);
        images.push(i);
    }

    Ok(Dataset {
        spec: DatasetSpec {
            scene: scene_config,
            oracle,
            ..spec.clone()
        },
        scene,
        snapshots,
        graphs,
        images,
        baseline: None,
    })
}

impl Dataset {
    pub fn vehicle_ids(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.graphs.iter().map(|g| g.tx_vehicle_id).collect();
        set.into_iter().collect()
    }

    /// Graph indices whose Tx vehicle belongs to the id set.
    pub fn indices_for(&self, ids: &BTreeSet<u32>) -> Vec<usize> {
        self.graphs
            .iter()
            .enumerate()
            .filter(|(_, g)| ids.contains(&g.tx_vehicle_id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Least-squares baseline fit over the transmission edges of the given
    /// graph indices.
    pub fn fit_baseline_on(&self, indices: &[usize]) -> Result<BaselineModel> {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for &i in indices {
            for e in &self.graphs[i].transmission_edges {
                rows.push([
                    e.features.log_dist(),
                    e.features.r_building(),
                    e.features.r_tree(),
                    e.features.i_dyn(),
                ]);
                targets.push(e.pl_raw);
            }
        }
        if rows.is_empty() {
            return Err(HarnessError::EmptySplit("baseline-fit"));
        }
        Ok(fit_baseline_rows(&rows, &targets)?)
    }

    /// Attach a fitted baseline to every graph (fills pl_base / y_target).
    pub fn attach_baseline(&mut self, baseline: BaselineModel) {
        for g in &mut self.graphs {
            attach_baseline(g, &baseline);
        }
        self.baseline = Some(baseline);
    }

    /// Raw path-loss statistics over the transmission edges of a subset
    /// (direct-regression standardization).
    pub fn raw_stats_on(&self, indices: &[usize]) -> Result<RawTargetStats> {
        let mut values = Vec::new();
        for &i in indices {
            for e in &self.graphs[i].transmission_edges {
                values.push(e.pl_raw);
            }
        }
        if values.is_empty() {
            return Err(HarnessError::EmptySplit("raw-stats"));
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        Ok(RawTargetStats {
            mu,
            sigma: var.sqrt().max(1e-6),
        })
    }
}
