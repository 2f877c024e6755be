//! Physics-aware per-link feature extraction: Bresenham grid traversal over
//! semantic masks and the 14-dimensional grouped edge feature vector.

use crate::grid::Grid;
use crate::scene::Scene;
use crate::trajectory::Snapshot;
use crate::{distance, CoreError, Point3, Result};

/// Feature vector length.
pub const NUM_FEATURES: usize = 14;

/// Feature indices, grouped:
/// G1 distance: 0 = log10(d), 1 = d / window (clamped to [0,1])
/// G2 static blockage: 2 = r_building, 3 = r_tree
/// G3 dynamic blockers: 4 = I_dyn, 5 = d_blocker_norm
/// G4 relative position: 6..9 = unit direction (dx, dy, dz) / d
/// G5 direction & motion: 9 = cos(phi), 10 = sin(phi), 11 = v_norm
/// G6 link type one-hot: 12 = is_transmission, 13 = is_correlation
pub const IDX_LOG_DIST: usize = 0;
pub const IDX_DIST_NORM: usize = 1;
pub const IDX_R_BUILDING: usize = 2;
pub const IDX_R_TREE: usize = 3;
pub const IDX_I_DYN: usize = 4;
pub const IDX_D_BLOCKER: usize = 5;
pub const IDX_DIR_X: usize = 6;
pub const IDX_DIR_Y: usize = 7;
pub const IDX_DIR_Z: usize = 8;
pub const IDX_COS_PHI: usize = 9;
pub const IDX_SIN_PHI: usize = 10;
pub const IDX_V_NORM: usize = 11;
pub const IDX_IS_TRANSMISSION: usize = 12;
pub const IDX_IS_CORRELATION: usize = 13;

/// Half-open feature ranges of the six groups.
pub const GROUP_RANGES: [(usize, usize); 6] = [(0, 2), (2, 4), (4, 6), (6, 9), (9, 12), (12, 14)];

/// Edge role in the ESPL graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Transmission,
    Correlation,
}

/// The 14-dimensional physics-aware edge feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFeatures {
    pub values: [f64; NUM_FEATURES],
}

impl LinkFeatures {
    pub fn log_dist(&self) -> f64 {
        self.values[IDX_LOG_DIST]
    }
    pub fn r_building(&self) -> f64 {
        self.values[IDX_R_BUILDING]
    }
    pub fn r_tree(&self) -> f64 {
        self.values[IDX_R_TREE]
    }
    pub fn i_dyn(&self) -> f64 {
        self.values[IDX_I_DYN]
    }
    pub fn link_type(&self) -> LinkType {
        if self.values[IDX_IS_TRANSMISSION] == 1.0 {
            LinkType::Transmission
        } else {
            LinkType::Correlation
        }
    }
}

/// Extraction parameters shared across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureParams {
    /// Normalization window for d_norm, meters.
    pub window: f64,
    /// Speed normalization, m/s.
    pub v_max: f64,
    /// Dynamic-blocker corridor half width, meters.
    pub corridor: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            window: 60.0,
            v_max: 20.0,
            corridor: 2.0,
        }
    }
}

/// Integer Bresenham traversal from `p0` to `p1` inclusive, as (col, row)
/// cells. The traversed cell set is symmetric in the endpoints: the segment
/// is always walked from its lexicographically smaller endpoint and reversed
/// when needed, so (a,b) and (b,a) visit identical cells.
pub fn bresenham_cells(
    p0: (i64, i64),
    p1: (i64, i64),
    grid_width: usize,
    grid_height: usize,
) -> Result<Vec<(i64, i64)>> {
    for p in [p0, p1] {
        if p.0 < 0 || p.1 < 0 || p.0 >= grid_width as i64 || p.1 >= grid_height as i64 {
            return Err(CoreError::OutOfBounds(p.1, p.0, grid_width, grid_height));
        }
    }
    let flip = p1 < p0;
    let (a, b) = if flip { (p1, p0) } else { (p0, p1) };

    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = a;
    let mut cells = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        cells.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    if flip {
        cells.reverse();
    }
    Ok(cells)
}

fn world_to_cell(p: &Point3, resolution: f64) -> (i64, i64) {
    (
        (p[0] / resolution).floor() as i64,
        (p[1] / resolution).floor() as i64,
    )
}

/// Fraction of interior Bresenham cells (endpoint cells excluded) whose mask
/// value is set. Zero when the traversal has no interior cells.
pub fn blockage_ratio(mask: &Grid<u8>, tx: &Point3, rx: &Point3, resolution: f64) -> Result<f64> {
    let c0 = world_to_cell(tx, resolution);
    let c1 = world_to_cell(rx, resolution);
    let cells = bresenham_cells(c0, c1, mask.width(), mask.height())?;
    if cells.len() <= 2 {
        return Ok(0.0);
    }
    let interior = &cells[1..cells.len() - 1];
    let blocked = interior
        .iter()
        .filter(|&&(col, row)| mask.get(row as usize, col as usize) != 0)
        .count();
    Ok(blocked as f64 / interior.len() as f64)
}

/// Dynamic-blocker indicator and normalized along-link distance to the
/// nearest blocker. A vehicle blocks when its center is within `corridor`
/// meters of the 2D segment and strictly between the endpoints.
pub fn dynamic_blocker_features(
    snapshot: &Snapshot,
    tx: &Point3,
    rx: &Point3,
    corridor: f64,
) -> (f64, f64) {
    let ab = [rx[0] - tx[0], rx[1] - tx[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 <= 0.0 {
        return (0.0, 1.0);
    }
    let mut nearest_t = f64::INFINITY;
    for v in &snapshot.dynamic_vehicles {
        let w = [v.position[0] - tx[0], v.position[1] - tx[1]];
        let t = (w[0] * ab[0] + w[1] * ab[1]) / len2;
        if t <= 0.0 || t >= 1.0 {
            continue;
        }
        let px = w[0] - t * ab[0];
        let py = w[1] - t * ab[1];
        if (px * px + py * py).sqrt() <= corridor {
            nearest_t = nearest_t.min(t);
        }
    }
    if nearest_t.is_finite() {
        (1.0, nearest_t)
    } else {
        (0.0, 1.0)
    }
}

/// Extract the full 14-dimensional feature vector for a directed link from
/// `src` to `dst`. For transmission links `src` must be the Tx position and
/// the G5 azimuth is measured relative to the Tx heading; correlation links
/// use the world-frame bearing and zero speed.
pub fn extract_link_features(
    scene: &Scene,
    snapshot: &Snapshot,
    src: &Point3,
    dst: &Point3,
    link_type: LinkType,
    params: &FeatureParams,
) -> Result<LinkFeatures> {
    let d = distance(src, dst);
    if d <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    let res = scene.config.resolution;
    let r_building = blockage_ratio(&scene.building_mask, src, dst, res)?;
    let r_tree = blockage_ratio(&scene.tree_mask, src, dst, res)?;
    let (i_dyn, d_blocker) = dynamic_blocker_features(snapshot, src, dst, params.corridor);

    let azimuth = (dst[1] - src[1]).atan2(dst[0] - src[0]);
    let (cos_phi, sin_phi, v_norm) = match link_type {
        LinkType::Transmission => {
            let phi = azimuth - snapshot.tx_heading;
            (
                phi.cos(),
                phi.sin(),
                (snapshot.tx_speed / params.v_max).clamp(0.0, 1.0),
            )
        }
        LinkType::Correlation => (azimuth.cos(), azimuth.sin(), 0.0),
    };

    let mut values = [0.0; NUM_FEATURES];
    values[IDX_LOG_DIST] = d.log10();
    values[IDX_DIST_NORM] = (d / params.window).clamp(0.0, 1.0);
    values[IDX_R_BUILDING] = r_building;
    values[IDX_R_TREE] = r_tree;
    values[IDX_I_DYN] = i_dyn;
    values[IDX_D_BLOCKER] = d_blocker;
    values[IDX_DIR_X] = (dst[0] - src[0]) / d;
    values[IDX_DIR_Y] = (dst[1] - src[1]) / d;
    values[IDX_DIR_Z] = (dst[2] - src[2]) / d;
    values[IDX_COS_PHI] = cos_phi;
    values[IDX_SIN_PHI] = sin_phi;
    values[IDX_V_NORM] = v_norm;
    match link_type {
        LinkType::Transmission => values[IDX_IS_TRANSMISSION] = 1.0,
        LinkType::Correlation => values[IDX_IS_CORRELATION] = 1.0,
    }
    Ok(LinkFeatures { values })
}
