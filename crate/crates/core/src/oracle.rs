//! Deterministic ground-truth path-loss generator. Labels are free-space
//! path loss plus semantic blockage penalties, the per-scene shadowing field
//! sampled at the Rx, and a small seeded Gaussian perturbation.

use crate::baseline::fspl;
use crate::features::{blockage_ratio, dynamic_blocker_features};
use crate::rng::{rng_from_seed, subseed_n};
use crate::scene::Scene;
use crate::trajectory::Snapshot;
use crate::{distance, CoreError, Point3, Result};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

const STREAM_NOISE: u64 = 0x4e4f_4953;

/// Oracle penalty and noise parameters (dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub building_penalty: f64,
    pub tree_penalty: f64,
    pub dynamic_penalty: f64,
    pub shadow_weight: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    /// Corridor half-width for the dynamic blocker test, meters.
    pub corridor: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            building_penalty: 25.0,
            tree_penalty: 10.0,
            dynamic_penalty: 6.0,
            shadow_weight: 1.0,
            noise_sigma: 0.5,
            noise_seed: 0,
            corridor: 2.0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.building_penalty < 0.0
            || self.tree_penalty < 0.0
            || self.dynamic_penalty < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(CoreError::InvalidConfig(
                "oracle penalties and noise_sigma must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth path loss for the link from the snapshot Tx to the Rx at
/// `rx_index` in the scene Rx grid. Deterministic for fixed inputs.
pub fn oracle_path_loss_indexed(
    scene: &Scene,
    snapshot: &Snapshot,
    rx_index: usize,
    params: &OracleParams,
) -> Result<f64> {
    let rx = &scene.rx_positions[rx_index];
    let d = distance(&snapshot.tx_position, rx);
    if d <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    let res = scene.config.resolution;
    let r_building = blockage_ratio(&scene.building_mask, &snapshot.tx_position, rx, res)?;
    let r_tree = blockage_ratio(&scene.tree_mask, &snapshot.tx_position, rx, res)?;
    let (i_dyn, _) = dynamic_blocker_features(snapshot, &snapshot.tx_position, rx, params.corridor);

    let (row, col) = scene
        .cell_of(rx[0], rx[1])
        .ok_or(CoreError::NotAnRxPosition(rx[0], rx[1], rx[2]))?;
    let shadow = scene.shadow_field.get(row, col);

    let noise = if params.noise_sigma > 0.0 {
        let seed = subseed_n(
            params.noise_seed,
            &[STREAM_NOISE, u64::from(snapshot.snapshot_id), rx_index as u64],
        );
        let mut rng = rng_from_seed(seed);
        let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
        z * params.noise_sigma
    } else {
        0.0
    };

    Ok(fspl(d, scene.config.carrier_freq)?
        + params.building_penalty * r_building
        + params.tree_penalty * r_tree
        + params.dynamic_penalty * i_dyn
        + params.shadow_weight * shadow
        + noise)
}

/// Ground-truth path loss for an Rx given by position; the position must be
/// one of the scene Rx grid points.
pub fn oracle_path_loss(
    scene: &Scene,
    snapshot: &Snapshot,
    rx: &Point3,
    params: &OracleParams,
) -> Result<f64> {
    let idx = scene
        .rx_positions
        .iter()
        .position(|p| p == rx)
        .ok_or(CoreError::NotAnRxPosition(rx[0], rx[1], rx[2]))?;
    oracle_path_loss_indexed(scene, snapshot, idx, params)
}
