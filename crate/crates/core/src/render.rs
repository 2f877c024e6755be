//! Transmitter-centered, heading-aligned semantic renders consumed by the
//! visual branch. Channel 0 = buildings, 1 = trees, 2 = dynamic vehicles.

use crate::grid::Grid;
use crate::scene::Scene;
use crate::trajectory::Snapshot;
use crate::{CoreError, Point3, Result};

/// Square semantic image in [0,1], stored channel-major (CHW).
#[derive(Debug, Clone, PartialEq)]
pub struct EgoImage {
    pub size: usize,
    /// Channel-major pixel data, length 3 * size * size.
    pub pixels: Vec<f64>,
    /// Meters of world covered by the image side.
    pub window: f64,
    /// (tx_position, tx_heading) the image was rendered from.
    pub pose: (Point3, f64),
}

impl EgoImage {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.pixels[channel * self.size * self.size + row * self.size + col]
    }

    /// All-zero image with the same shape conventions.
    pub fn zeros(size: usize, window: f64) -> Self {
        Self {
            size,
            pixels: vec![0.0; 3 * size * size],
            window,
            pose: ([0.0; 3], 0.0),
        }
    }
}

fn mask_to_f64(mask: &Grid<u8>) -> Grid<f64> {
    let data = mask.data().iter().map(|&v| f64::from(v)).collect();
    Grid::from_vec(mask.width(), mask.height(), data)
}

fn rasterize_vehicles(scene: &Scene, snapshot: &Snapshot) -> Grid<f64> {
    let res = scene.config.resolution;
    let mut grid = Grid::<f64>::new(scene.config.grid_width, scene.config.grid_height);
    for v in &snapshot.dynamic_vehicles {
        let (cx, cy) = (v.position[0], v.position[1]);
        let (hx, hy) = (v.half_extents[0], v.half_extents[1]);
        let radius = (hx * hx + hy * hy).sqrt();
        let (sin_h, cos_h) = v.heading.sin_cos();
        let c0 = ((cx - radius) / res).floor() as i64;
        let c1 = ((cx + radius) / res).ceil() as i64;
        let r0 = ((cy - radius) / res).floor() as i64;
        let r1 = ((cy + radius) / res).ceil() as i64;
        for row in r0..=r1 {
            for col in c0..=c1 {
                if !grid.in_bounds(row, col) {
                    continue;
                }
                let px = (col as f64 + 0.5) * res - cx;
                let py = (row as f64 + 0.5) * res - cy;
                // Into the vehicle frame.
                let along = cos_h * px + sin_h * py;
                let across = -sin_h * px + cos_h * py;
                if along.abs() <= hx && across.abs() <= hy {
                    grid.set(row as usize, col as usize, 1.0);
                }
            }
        }
    }
    grid
}

/// Render a `size`x`size` top-down crop of the local environment centered at
/// the Tx, rotated so the Tx heading points toward the top of the image.
pub fn render_ego_image(
    scene: &Scene,
    snapshot: &Snapshot,
    size: usize,
    window: f64,
) -> Result<EgoImage> {
    if size < 16 {
        return Err(CoreError::InvalidConfig(format!(
            "ego image size must be >= 16, got {size}"
        )));
    }
    if window <= 0.0 {
        return Err(CoreError::InvalidConfig("window must be > 0".into()));
    }

    let channels = [
        mask_to_f64(&scene.building_mask),
        mask_to_f64(&scene.tree_mask),
        rasterize_vehicles(scene, snapshot),
    ];

    let res = scene.config.resolution;
    let (tx, ty) = (snapshot.tx_position[0], snapshot.tx_position[1]);
    let (sin_h, cos_h) = snapshot.tx_heading.sin_cos();
    // Forward (image up) and right (image right) unit vectors in world frame.
    let fwd = [cos_h, sin_h];
    let right = [sin_h, -cos_h];

    let mut pixels = vec![0.0; 3 * size * size];
    for (ci, channel) in channels.iter().enumerate() {
        for row in 0..size {
            let v = 0.5 - (row as f64 + 0.5) / size as f64;
            for col in 0..size {
                let u = (col as f64 + 0.5) / size as f64 - 0.5;
                let wx = tx + (v * fwd[0] + u * right[0]) * window;
                let wy = ty + (v * fwd[1] + u * right[1]) * window;
                let sample = channel.sample_bilinear(wx / res, wy / res);
                pixels[ci * size * size + row * size + col] = sample.clamp(0.0, 1.0);
            }
        }
    }

    Ok(EgoImage {
        size,
        pixels,
        window,
        pose: (snapshot.tx_position, snapshot.tx_heading),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, ScenarioKind, Scene, SceneConfig};
    use crate::trajectory::simulate_trajectories;

    fn empty_scene() -> Scene {
        let cfg = SceneConfig::for_scenario(ScenarioKind::WideLane, 3);
        let mut scene = generate_scene(&cfg).unwrap();
        for v in scene.building_mask.data_mut() {
            *v = 0;
        }
        for v in scene.tree_mask.data_mut() {
            *v = 0;
        }
        scene
    }

    fn snapshot_at(scene: &Scene, x: f64, y: f64, heading: f64) -> Snapshot {
        Snapshot {
            snapshot_id: 0,
            tx_position: [x, y, scene.config.tx_height],
            tx_heading: heading,
            tx_speed: 10.0,
            tx_vehicle_id: 0,
            dynamic_vehicles: vec![],
            scene_ref: scene.scene_id.clone(),
        }
    }

    #[test]
    fn empty_scene_renders_all_zero() {
        let scene = empty_scene();
        let snap = snapshot_at(&scene, 64.0, 64.0, 0.0);
        let img = render_ego_image(&scene, &snap, 32, 30.0).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn building_ahead_lands_in_upper_half() {
        let mut scene = empty_scene();
        // One building cell 8 m ahead of the Tx along +x.
        scene.building_mask.set(64, 72, 1);
        let snap = snapshot_at(&scene, 64.5, 64.5, 0.0);
        let img = render_ego_image(&scene, &snap, 32, 40.0).unwrap();
        let mut upper = 0.0;
        let mut lower = 0.0;
        for row in 0..32 {
            for col in 0..32 {
                let v = img.get(0, row, col);
                if row < 16 {
                    upper += v;
                } else {
                    lower += v;
                }
            }
        }
        assert!(upper > 0.0, "expected building pixels in the upper half");
        assert_eq!(lower, 0.0, "no building pixels expected in the lower half");
    }

    #[test]
    fn heading_flip_equals_rotated_render() {
        let cfg = SceneConfig::for_scenario(ScenarioKind::Crossroad, 17);
        let scene = generate_scene(&cfg).unwrap();
        let snaps = simulate_trajectories(&scene, 3, 5).unwrap();
        let base = &snaps[1];
        let mut flipped = base.clone();
        flipped.tx_heading += std::f64::consts::PI;
        let size = 32;
        let a = render_ego_image(&scene, base, size, 48.0).unwrap();
        let b = render_ego_image(&scene, &flipped, size, 48.0).unwrap();
        for ch in 0..3 {
            for row in 0..size {
                for col in 0..size {
                    let rot = a.get(ch, size - 1 - row, size - 1 - col);
                    assert!(
                        (b.get(ch, row, col) - rot).abs() <= 1e-6,
                        "mismatch at ch{ch} ({row},{col})"
                    );
                }
            }
        }
    }

    #[test]
    fn vehicle_channel_shows_other_vehicles() {
        let scene = empty_scene();
        let mut snap = snapshot_at(&scene, 64.5, 64.5, 0.0);
        snap.dynamic_vehicles.push(crate::trajectory::VehicleState {
            vehicle_id: 1,
            position: [70.5, 64.5, 0.0],
            heading: 0.0,
            speed: 8.0,
            half_extents: [2.2, 0.9, 0.75],
        });
        let img = render_ego_image(&scene, &snap, 32, 30.0).unwrap();
        let total: f64 = (0..32)
            .flat_map(|r| (0..32).map(move |c| (r, c)))
            .map(|(r, c)| img.get(2, r, c))
            .sum();
        assert!(total > 0.0);
        assert!(img.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
