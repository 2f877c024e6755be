//! Constant-speed lane-following vehicle trajectories and per-snapshot
//! transmitter assignment.

use crate::rng::{rng_from_seed, subseed};
use crate::scene::Scene;
use crate::{CoreError, Point3, Result};
use rand::Rng;

const STREAM_TRAJECTORY: u64 = 0x5452_414a;
/// Snapshot period in seconds.
const SNAPSHOT_DT: f64 = 0.5;

/// State of one non-Tx vehicle at a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub vehicle_id: u32,
    /// Ground-plane position (z = 0).
    pub position: Point3,
    pub heading: f64,
    pub speed: f64,
    /// Bounding-box half extents (along heading, across, vertical), meters.
    pub half_extents: [f64; 3],
}

/// One timestep of the dynamic world.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub snapshot_id: u32,
    pub tx_position: Point3,
    pub tx_heading: f64,
    pub tx_speed: f64,
    pub tx_vehicle_id: u32,
    /// All vehicles except the Tx vehicle.
    pub dynamic_vehicles: Vec<VehicleState>,
    pub scene_ref: String,
}

struct VehicleParams {
    lane: usize,
    speed: f64,
    start_offset: f64,
    half_extents: [f64; 3],
}

/// Simulate `num_snapshots` timesteps of lane-following traffic. The Tx role
/// cycles round-robin over vehicle ids so every vehicle appears as Tx once
/// the snapshot count reaches the vehicle count.
pub fn simulate_trajectories(scene: &Scene, num_snapshots: usize, seed: u64) -> Result<Vec<Snapshot>> {
    if num_snapshots == 0 {
        return Err(CoreError::InvalidConfig("num_snapshots must be >= 1".into()));
    }
    let num_vehicles = scene.config.num_vehicles;
    let n_lanes = scene.lanes.len();
    let mut rng = rng_from_seed(subseed(seed, STREAM_TRAJECTORY));

    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let params: Vec<VehicleParams> = (0..num_vehicles)
        .map(|id| {
            let lane = id % n_lanes;
            let lane_len = scene.lanes[lane].length();
            VehicleParams {
                lane,
                speed: rng.random_range(6.0..14.0),
                start_offset: ((id as f64 + 1.0) * GOLDEN).fract() * lane_len,
                half_extents: [
                    rng.random_range(1.9..2.5),
                    rng.random_range(0.8..1.05),
                    rng.random_range(0.65..0.85),
                ],
            }
        })
        .collect();

    let mut snapshots = Vec::with_capacity(num_snapshots);
    for t in 0..num_snapshots {
        let time = t as f64 * SNAPSHOT_DT;
        let states: Vec<([f64; 2], f64)> = params
            .iter()
            .map(|p| scene.lanes[p.lane].sample(p.start_offset + p.speed * time))
            .collect();

        let tx_id = (t % num_vehicles) as u32;
        let (tx_xy, tx_heading) = states[tx_id as usize];
        let tx_speed = params[tx_id as usize].speed;

        let dynamic_vehicles = (0..num_vehicles)
            .filter(|&id| id as u32 != tx_id)
            .map(|id| VehicleState {
                vehicle_id: id as u32,
                position: [states[id].0[0], states[id].0[1], 0.0],
                heading: states[id].1,
                speed: params[id].speed,
                half_extents: params[id].half_extents,
            })
            .collect();

        snapshots.push(Snapshot {
            snapshot_id: t as u32,
            tx_position: [tx_xy[0], tx_xy[1], scene.config.tx_height],
            tx_heading,
            tx_speed,
            tx_vehicle_id: tx_id,
            dynamic_vehicles,
            scene_ref: scene.scene_id.clone(),
        });
    }
    Ok(snapshots)
}
