//! Procedural vehicular scenes: semantic masks, Rx grids, lane polylines and
//! the per-scene shadowing field.

use crate::grid::Grid;
use crate::rng::{rng_from_seed, subseed};
use crate::{CoreError, Point3, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

const STREAM_SHADOW: u64 = 0x5348_4144;
const STREAM_LAYOUT: u64 = 0x4c41_594f;

/// Road scenario archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WideLane,
    Crossroad,
    ForkingRoad,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::WideLane => "wide_lane",
            ScenarioKind::Crossroad => "crossroad",
            ScenarioKind::ForkingRoad => "forking_road",
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            ScenarioKind::WideLane => 1,
            ScenarioKind::Crossroad => 2,
            ScenarioKind::ForkingRoad => 3,
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "wide_lane" => Ok(ScenarioKind::WideLane),
            "crossroad" => Ok(ScenarioKind::Crossroad),
            "forking_road" => Ok(ScenarioKind::ForkingRoad),
            other => Err(format!("unknown scenario kind: {other}")),
        }
    }
}

/// Static scene parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub scenario_kind: ScenarioKind,
    pub grid_width: usize,
    pub grid_height: usize,
    /// Meters per grid cell.
    pub resolution: f64,
    pub num_vehicles: usize,
    pub num_rx: usize,
    /// Rx antenna height in meters.
    pub rx_height: f64,
    /// Tx antenna height in meters.
    pub tx_height: f64,
    /// Carrier frequency in GHz.
    pub carrier_freq: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Desk-scale defaults for a scenario.
    pub fn for_scenario(kind: ScenarioKind, seed: u64) -> Self {
        let num_vehicles = match kind {
            ScenarioKind::WideLane => 40,
            ScenarioKind::Crossroad => 20,
            ScenarioKind::ForkingRoad => 25,
        };
        Self {
            scenario_kind: kind,
            grid_width: 128,
            grid_height: 128,
            resolution: 1.0,
            num_vehicles,
            num_rx: 400,
            rx_height: 1.5,
            tx_height: 2.0,
            carrier_freq: 28.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_width < 32 || self.grid_height < 32 {
            return Err(CoreError::InvalidConfig(format!(
                "grid must be at least 32x32, got {}x{}",
                self.grid_width, self.grid_height
            )));
        }
        if self.resolution <= 0.0 {
            return Err(CoreError::InvalidConfig("resolution must be > 0".into()));
        }
        if self.carrier_freq <= 0.0 {
            return Err(CoreError::InvalidConfig("carrier_freq must be > 0".into()));
        }
        if self.num_vehicles == 0 {
            return Err(CoreError::InvalidConfig("num_vehicles must be >= 1".into()));
        }
        if self.num_rx == 0 {
            return Err(CoreError::InvalidConfig("num_rx must be >= 1".into()));
        }
        if self.rx_height <= 0.0 || self.tx_height <= 0.0 {
            return Err(CoreError::InvalidConfig("antenna heights must be > 0".into()));
        }
        Ok(())
    }
}

/// Closed-loop lane polyline in world meters; vehicles wrap at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    waypoints: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Lane {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Self {
        assert!(waypoints.len() >= 2, "lane needs at least two waypoints");
        let mut cumulative = Vec::with_capacity(waypoints.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for pair in waypoints.windows(2) {
            let dx = pair[1][0] - pair[0][0];
            let dy = pair[1][1] - pair[0][1];
            acc += (dx * dx + dy * dy).sqrt();
            cumulative.push(acc);
        }
        Self {
            waypoints,
            cumulative,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and heading at arc length `s` (wrapped to the lane length).
    pub fn sample(&self, s: f64) -> ([f64; 2], f64) {
        let len = self.length();
        let mut s = s % len;
        if s < 0.0 {
            s += len;
        }
        let mut seg = self
            .cumulative
            .partition_point(|&c| c <= s)
            .saturating_sub(1);
        if seg >= self.waypoints.len() - 1 {
            seg = self.waypoints.len() - 2;
        }
        let a = self.waypoints[seg];
        let b = self.waypoints[seg + 1];
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if seg_len > 0.0 {
            (s - self.cumulative[seg]) / seg_len
        } else {
            0.0
        };
        let pos = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        (pos, heading)
    }
}

/// A generated static environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub building_mask: Grid<u8>,
    pub tree_mask: Grid<u8>,
    pub road_mask: Grid<u8>,
    pub rx_positions: Vec<Point3>,
    pub shadow_field: Grid<f64>,
    pub scene_id: String,
    /// Lane polylines used by the trajectory simulator.
    pub lanes: Vec<Lane>,
}

impl Scene {
    /// Grid cell (row, col) containing a world point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = (x / self.config.resolution).floor() as i64;
        let row = (y / self.config.resolution).floor() as i64;
        if self.road_mask.in_bounds(row, col) {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    pub fn world_width(&self) -> f64 {
        self.config.grid_width as f64 * self.config.resolution
    }

    pub fn world_height(&self) -> f64 {
        self.config.grid_height as f64 * self.config.resolution
    }
}

struct MaskBuilder {
    width: usize,
    height: usize,
    res: f64,
    building: Grid<u8>,
    tree: Grid<u8>,
    road: Grid<u8>,
}

impl MaskBuilder {
    fn new(cfg: &SceneConfig) -> Self {
        Self {
            width: cfg.grid_width,
            height: cfg.grid_height,
            res: cfg.resolution,
            building: Grid::new(cfg.grid_width, cfg.grid_height),
            tree: Grid::new(cfg.grid_width, cfg.grid_height),
            road: Grid::new(cfg.grid_width, cfg.grid_height),
        }
    }

    fn fill_rect(grid: &mut Grid<u8>, res: f64, x0: f64, x1: f64, y0: f64, y1: f64) {
        let c0 = (x0 / res).floor().max(0.0) as usize;
        let c1 = ((x1 / res).ceil() as usize).min(grid.width());
        let r0 = (y0 / res).floor().max(0.0) as usize;
        let r1 = ((y1 / res).ceil() as usize).min(grid.height());
        for r in r0..r1 {
            for c in c0..c1 {
                let cx = (c as f64 + 0.5) * res;
                let cy = (r as f64 + 0.5) * res;
                if cx >= x0 && cx < x1 && cy >= y0 && cy < y1 {
                    grid.set(r, c, 1);
                }
            }
        }
    }

    fn fill_disk(grid: &mut Grid<u8>, res: f64, x: f64, y: f64, radius: f64) {
        let c0 = ((x - radius) / res).floor().max(0.0) as i64;
        let c1 = ((x + radius) / res).ceil() as i64;
        let r0 = ((y - radius) / res).floor().max(0.0) as i64;
        let r1 = ((y + radius) / res).ceil() as i64;
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !grid.in_bounds(r, c) {
                    continue;
                }
                let cx = (c as f64 + 0.5) * res;
                let cy = (r as f64 + 0.5) * res;
                if (cx - x).powi(2) + (cy - y).powi(2) <= radius * radius {
                    grid.set(r as usize, c as usize, 1);
                }
            }
        }
    }

    /// Mark road cells within `halfwidth` meters of the segment a-b.
    fn fill_road_segment(&mut self, a: [f64; 2], b: [f64; 2], halfwidth: f64) {
        let res = self.res;
        let pad = halfwidth + res;
        let x_lo = a[0].min(b[0]) - pad;
        let x_hi = a[0].max(b[0]) + pad;
        let y_lo = a[1].min(b[1]) - pad;
        let y_hi = a[1].max(b[1]) + pad;
        let c0 = (x_lo / res).floor().max(0.0) as i64;
        let c1 = (x_hi / res).ceil() as i64;
        let r0 = (y_lo / res).floor().max(0.0) as i64;
        let r1 = (y_hi / res).ceil() as i64;
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !self.road.in_bounds(r, c) {
                    continue;
                }
                let px = (c as f64 + 0.5) * res;
                let py = (r as f64 + 0.5) * res;
                let t = if len2 > 0.0 {
                    (((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let qx = a[0] + t * ab[0];
                let qy = a[1] + t * ab[1];
                if (px - qx).powi(2) + (py - qy).powi(2) <= halfwidth * halfwidth {
                    self.road.set(r as usize, c as usize, 1);
                }
            }
        }
    }

    /// Buildings and trees never overlap road cells.
    fn carve_road(&mut self) {
        for i in 0..self.width * self.height {
            if self.road.data()[i] != 0 {
                self.building.data_mut()[i] = 0;
                self.tree.data_mut()[i] = 0;
            }
        }
    }
}

/// Offset a polyline sideways by `offset` meters (positive = left of travel).
fn offset_polyline(points: &[[f64; 2]], offset: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let (a, b) = if i + 1 < points.len() {
            (points[i], points[i + 1])
        } else {
            (points[i - 1], points[i])
        };
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let len = (dx * dx + dy * dy).sqrt().max(1e-12);
        let nx = -dy / len;
        let ny = dx / len;
        out.push([p[0] + offset * nx, p[1] + offset * ny]);
    }
    out
}

fn reversed(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut v = points.to_vec();
    v.reverse();
    v
}

fn layout_wide_lane(cfg: &SceneConfig, b: &mut MaskBuilder, rng: &mut impl Rng) -> Vec<Lane> {
    let w = cfg.grid_width as f64 * cfg.resolution;
    let h = cfg.grid_height as f64 * cfg.resolution;
    let cy = h / 2.0;
    let road_half = 8.0;
    b.fill_road_segment([0.0, cy], [w, cy], road_half);

    // Flanking building rows hugging the road edge, with irregular
    // footprints and gaps; the gap pattern is what makes ego views locally
    // distinctive, and gap/courtyard Rxs see building-blocked links.
    for side in [-1.0, 1.0] {
        let mut x = rng.random_range(1.0..4.0);
        while x < w - 4.0 {
            let bw = rng.random_range(6.0..20.0);
            let setback = rng.random_range(0.5..2.5);
            let depth = rng.random_range(8.0..18.0);
            let front = cy + side * (road_half + setback);
            let (y0, y1) = if side < 0.0 {
                ((front - depth).max(0.0), front)
            } else {
                (front, (front + depth).min(h))
            };
            MaskBuilder::fill_rect(&mut b.building, cfg.resolution, x, (x + bw).min(w), y0, y1);
            let gap = rng.random_range(3.0..9.0);
            // Some gaps get a tree cluster.
            if rng.random_bool(0.5) {
                let tx = x + bw + gap / 2.0;
                let ty = cy + side * (road_half + rng.random_range(2.0..5.0));
                MaskBuilder::fill_disk(&mut b.tree, cfg.resolution, tx, ty, rng.random_range(1.0..2.5));
            }
            x += bw + gap;
        }
        // Roadside tree line just off the road edge.
        let mut tx = rng.random_range(2.0..5.0);
        while tx < w - 2.0 {
            if rng.random_bool(0.5) {
                let ty = cy + side * (road_half + 1.2);
                MaskBuilder::fill_disk(&mut b.tree, cfg.resolution, tx, ty, rng.random_range(0.8..2.0));
            }
            tx += rng.random_range(2.5..5.5);
        }
    }

    let margin = 2.0;
    let mut lanes = Vec::new();
    for (dy, forward) in [(-6.0, true), (-2.0, true), (2.0, false), (6.0, false)] {
        let y = cy + dy;
        let pts = vec![[margin, y], [w - margin, y]];
        lanes.push(Lane::new(if forward { pts } else { reversed(&pts) }));
    }
    lanes
}

fn layout_crossroad(cfg: &SceneConfig, b: &mut MaskBuilder, rng: &mut impl Rng) -> Vec<Lane> {
    let w = cfg.grid_width as f64 * cfg.resolution;
    let h = cfg.grid_height as f64 * cfg.resolution;
    let cx = w / 2.0;
    let cy = h / 2.0;
    let road_half = 6.0;
    b.fill_road_segment([0.0, cy], [w, cy], road_half);
    b.fill_road_segment([cx, 0.0], [cx, h], road_half);

    // Manhattan blocks in the four quadrants, close to the road edges.
    let quad = [
        (1.0, cx - road_half - 1.0, 1.0, cy - road_half - 1.0),
        (cx + road_half + 1.0, w - 1.0, 1.0, cy - road_half - 1.0),
        (1.0, cx - road_half - 1.0, cy + road_half + 1.0, h - 1.0),
        (cx + road_half + 1.0, w - 1.0, cy + road_half + 1.0, h - 1.0),
    ];
    for (x_lo, x_hi, y_lo, y_hi) in quad {
        let mut y = y_lo;
        while y < y_hi - 6.0 {
            let bh = rng.random_range(10.0..16.0);
            let street_y = rng.random_range(4.0..6.0);
            let mut x = x_lo;
            while x < x_hi - 6.0 {
                let bw = rng.random_range(10.0..16.0);
                let street_x = rng.random_range(4.0..6.0);
                if rng.random_bool(0.85) {
                    let inset = rng.random_range(0.5..2.0);
                    MaskBuilder::fill_rect(
                        &mut b.building,
                        cfg.resolution,
                        x + inset,
                        (x + bw - inset).min(x_hi),
                        y + inset,
                        (y + bh - inset).min(y_hi),
                    );
                } else if rng.random_bool(0.6) {
                    MaskBuilder::fill_disk(
                        &mut b.tree,
                        cfg.resolution,
                        x + bw / 2.0,
                        y + bh / 2.0,
                        rng.random_range(1.5..3.0),
                    );
                }
                x += bw + street_x;
            }
            y += bh + street_y;
        }
    }
    // Corner trees near the intersection.
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        if rng.random_bool(0.7) {
            MaskBuilder::fill_disk(
                &mut b.tree,
                cfg.resolution,
                cx + sx * (road_half + 1.5),
                cy + sy * (road_half + 1.5),
                rng.random_range(0.8..1.6),
            );
        }
    }

    let margin = 2.0;
    let mut lanes = Vec::new();
    lanes.push(Lane::new(vec![[margin, cy - 2.0], [w - margin, cy - 2.0]]));
    lanes.push(Lane::new(vec![[w - margin, cy + 2.0], [margin, cy + 2.0]]));
    lanes.push(Lane::new(vec![[cx + 2.0, margin], [cx + 2.0, h - margin]]));
    lanes.push(Lane::new(vec![[cx - 2.0, h - margin], [cx - 2.0, margin]]));
    lanes
}

fn layout_forking_road(cfg: &SceneConfig, b: &mut MaskBuilder, rng: &mut impl Rng) -> Vec<Lane> {
    let w = cfg.grid_width as f64 * cfg.resolution;
    let h = cfg.grid_height as f64 * cfg.resolution;
    let cx = w / 2.0;
    let cy = h / 2.0;
    let road_half = 6.0;
    let fork = [cx, cy];
    let left_end = [(cx - 0.3 * w).max(road_half), h - 2.0];
    let right_end = [(cx + 0.3 * w).min(w - road_half), h - 2.0];
    b.fill_road_segment([cx, 0.0], fork, road_half);
    b.fill_road_segment(fork, left_end, road_half);
    b.fill_road_segment(fork, right_end, road_half);

    let road_zone = b.road.dilate((2.0 / cfg.resolution).ceil() as usize);

    // Sparse low-rise buildings.
    for _ in 0..10 {
        let bx = rng.random_range(2.0..w - 14.0);
        let by = rng.random_range(2.0..h - 14.0);
        let bw = rng.random_range(6.0..12.0);
        let bh = rng.random_range(6.0..12.0);
        let col = ((bx + bw / 2.0) / cfg.resolution) as i64;
        let row = ((by + bh / 2.0) / cfg.resolution) as i64;
        if road_zone.in_bounds(row, col) && road_zone.get(row as usize, col as usize) == 0 {
            MaskBuilder::fill_rect(&mut b.building, cfg.resolution, bx, bx + bw, by, by + bh);
        }
    }
    // Dense vegetation, thicker near the branches.
    for _ in 0..90 {
        let tx = rng.random_range(1.0..w - 1.0);
        let ty = rng.random_range(1.0..h - 1.0);
        let near_branch = ty > cy * 0.6;
        if near_branch || rng.random_bool(0.4) {
            MaskBuilder::fill_disk(&mut b.tree, cfg.resolution, tx, ty, rng.random_range(0.8..2.8));
        }
    }

    let stem_start = [cx, 2.0];
    let mut lanes = Vec::new();
    for (end, _branch_tag) in [(left_end, 0), (right_end, 1)] {
        let center = vec![stem_start, fork, end];
        for offset in [-1.5, 1.5] {
            let path = offset_polyline(&center, offset);
            lanes.push(Lane::new(if offset < 0.0 { path } else { reversed(&path) }));
        }
    }
    lanes
}

fn build_shadow_field(cfg: &SceneConfig) -> Grid<f64> {
    let seed = subseed(cfg.seed, STREAM_SHADOW ^ cfg.scenario_kind.stream_tag());
    let mut rng = rng_from_seed(seed);
    let (w, h) = (cfg.grid_width, cfg.grid_height);
    let mut field = Grid::<f64>::new(w, h);
    for v in field.data_mut() {
        *v = rand_distr::StandardNormal.sample_from(&mut rng);
    }
    // Separable box filter, radius 8 cells, window renormalized at the edges.
    let radius: i64 = 8;
    let mut tmp = Grid::<f64>::new(w, h);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            let mut n = 0.0;
            for d in -radius..=radius {
                let cc = c as i64 + d;
                if cc >= 0 && (cc as usize) < w {
                    acc += field.get(r, cc as usize);
                    n += 1.0;
                }
            }
            tmp.set(r, c, acc / n);
        }
    }
    for c in 0..w {
        for r in 0..h {
            let mut acc = 0.0;
            let mut n = 0.0;
            for d in -radius..=radius {
                let rr = r as i64 + d;
                if rr >= 0 && (rr as usize) < h {
                    acc += tmp.get(rr as usize, c);
                    n += 1.0;
                }
            }
            field.set(r, c, acc / n);
        }
    }
    // Standardize to zero mean, 3 dB standard deviation.
    let n = (w * h) as f64;
    let mean = field.data().iter().sum::<f64>() / n;
    let var = field.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = 3.0 / var.sqrt().max(1e-12);
    for v in field.data_mut() {
        *v = (*v - mean) * scale;
    }
    field
}

trait SampleFrom {
    fn sample_from(&self, rng: &mut impl Rng) -> f64;
}

impl SampleFrom for rand_distr::StandardNormal {
    fn sample_from(&self, rng: &mut impl Rng) -> f64 {
        use rand_distr::Distribution;
        Distribution::<f64>::sample(self, rng)
    }
}

/// Generate a deterministic scene from a config. Same config (including
/// seed) always yields a bit-identical scene.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = rng_from_seed(subseed(
        config.seed,
        STREAM_LAYOUT ^ config.scenario_kind.stream_tag(),
    ));
    let mut builder = MaskBuilder::new(config);
    let lanes = match config.scenario_kind {
        ScenarioKind::WideLane => layout_wide_lane(config, &mut builder, &mut rng),
        ScenarioKind::Crossroad => layout_crossroad(config, &mut builder, &mut rng),
        ScenarioKind::ForkingRoad => layout_forking_road(config, &mut builder, &mut rng),
    };
    builder.carve_road();

    // Rx candidates: road plus a near-road fringe wide enough to reach the
    // gaps and courtyards behind the first building line, excluding the
    // building cells themselves.
    let fringe_radius = (10.0 / config.resolution).round().max(1.0) as usize;
    let fringe = builder.road.dilate(fringe_radius);
    let mut candidates = Vec::new();
    for (row, col, v) in fringe.iter_cells() {
        if v != 0 && builder.building.get(row, col) == 0 {
            candidates.push((row, col));
        }
    }
    if candidates.len() < config.num_rx {
        return Err(CoreError::InvalidConfig(format!(
            "num_rx = {} exceeds the {} available road-adjacent cells",
            config.num_rx,
            candidates.len()
        )));
    }
    let mut rx_positions = Vec::with_capacity(config.num_rx);
    for i in 0..config.num_rx {
        let idx = i * candidates.len() / config.num_rx;
        let (row, col) = candidates[idx];
        rx_positions.push([
            (col as f64 + 0.5) * config.resolution,
            (row as f64 + 0.5) * config.resolution,
            config.rx_height,
        ]);
    }

    let shadow_field = build_shadow_field(config);
    let scene_id = format!(
        "{}_s{}_{}x{}",
        config.scenario_kind.as_str(),
        config.seed,
        config.grid_width,
        config.grid_height
    );

    Ok(Scene {
        config: config.clone(),
        building_mask: builder.building,
        tree_mask: builder.tree,
        road_mask: builder.road,
        rx_positions,
        shadow_field,
        scene_id,
        lanes,
    })
}
