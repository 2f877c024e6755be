//! Conversion of ESPL graphs and ego images into the dense tensors the
//! network consumes. Directed model edges are laid out as
//! [Tx->Rx (K), Rx->Tx (K), correlation (C)]; the reverse transmission
//! copies share the forward feature rows.

use crate::config::ModelConfig;
use crate::scalar::{sc, Scalar};
use crate::{ModelError, Result};
use mmresgnn_core::features::NUM_FEATURES;
use mmresgnn_core::graph::ESPLGraph;
use mmresgnn_core::render::EgoImage;
use ndarray::{Array1, Array2, Array3};

/// Scale applied to Tx-relative node coordinates before encoding.
pub const NODE_COORD_SCALE: f64 = 60.0;

/// How regression targets are derived from edge labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetMode {
    /// Standardized residuals (requires pl_base / y_target on the edges).
    Residual,
    /// Standardized raw path loss with the given train statistics
    /// (direct-regression variants).
    StandardizedRaw { mu: f64, sigma: f64 },
}

/// Dense per-graph model input.
#[derive(Debug, Clone)]
pub struct GraphTensors<T> {
    pub num_nodes: usize,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    /// E x 14 edge features after feature masking.
    pub edge_feats: Array2<T>,
    /// N x 4 node features: Tx-relative coordinates / scale, type flag.
    pub node_feats: Array2<T>,
    /// Incoming edge ids per node.
    pub in_edges: Vec<Vec<usize>>,
    /// Edge ids of the Tx->Rx copies, aligned with transmission edge order.
    pub trans_slots: Vec<usize>,
    /// Regression targets per transmission edge (absent for inference).
    pub targets: Option<Array1<T>>,
    /// Per-transmission-edge label metadata in f64 for reconstruction.
    pub pl_raw: Vec<f64>,
    pub pl_base: Vec<f64>,
    pub log_dist: Vec<f64>,
    pub image: Array3<T>,
    pub snapshot_id: u32,
    pub tx_vehicle_id: u32,
}

impl<T: Scalar> GraphTensors<T> {
    pub fn num_edges(&self) -> usize {
        self.edge_src.len()
    }

    pub fn k(&self) -> usize {
        self.trans_slots.len()
    }
}

/// Build model tensors from a graph and its snapshot image.
pub fn tensorize_graph<T: Scalar>(
    graph: &ESPLGraph,
    image: &EgoImage,
    config: &ModelConfig,
    target_mode: Option<TargetMode>,
) -> Result<GraphTensors<T>> {
    let n = graph.nodes.len();
    let k = graph.transmission_edges.len();
    let tx_pos = graph.nodes[0].position;

    let mut node_feats = Array2::zeros((n, 4));
    for (i, node) in graph.nodes.iter().enumerate() {
        for ax in 0..3 {
            node_feats[[i, ax]] = sc((node.position[ax] - tx_pos[ax]) / NODE_COORD_SCALE);
        }
        node_feats[[i, 3]] = if node.is_tx { T::one() } else { T::zero() };
    }

    let use_corr = config.use_correlation_edges;
    let num_corr = if use_corr {
        graph.correlation_edges.len()
    } else {
        0
    };
    let num_edges = 2 * k + num_corr;
    let mut edge_src = Vec::with_capacity(num_edges);
    let mut edge_dst = Vec::with_capacity(num_edges);
    let mut edge_feats = Array2::zeros((num_edges, NUM_FEATURES));
    let mut trans_slots = Vec::with_capacity(k);

    let mask = &config.feature_mask.keep;
    let write_row = |row: usize, feats: &[f64; NUM_FEATURES], arr: &mut Array2<T>| {
        for (j, (&v, &keep)) in feats.iter().zip(mask.iter()).enumerate() {
            arr[[row, j]] = if keep { sc(v) } else { T::zero() };
        }
    };

    for (i, e) in graph.transmission_edges.iter().enumerate() {
        edge_src.push(e.tx_index);
        edge_dst.push(e.rx_index);
        write_row(i, &e.features.values, &mut edge_feats);
        trans_slots.push(i);
    }
    for (i, e) in graph.transmission_edges.iter().enumerate() {
        edge_src.push(e.rx_index);
        edge_dst.push(e.tx_index);
        write_row(k + i, &e.features.values, &mut edge_feats);
    }
    if use_corr {
        for (i, e) in graph.correlation_edges.iter().enumerate() {
            edge_src.push(e.src);
            edge_dst.push(e.dst);
            write_row(2 * k + i, &e.features.values, &mut edge_feats);
        }
    }

    let mut in_edges = vec![Vec::new(); n];
    for (eid, &dst) in edge_dst.iter().enumerate() {
        in_edges[dst].push(eid);
    }

    let targets = match target_mode {
        None => None,
        Some(TargetMode::Residual) => {
            let mut t = Array1::zeros(k);
            for (i, e) in graph.transmission_edges.iter().enumerate() {
                let y = e.y_target.ok_or_else(|| {
                    ModelError::InvalidConfig(
                        "residual targets requested but the graph has no baseline attached".into(),
                    )
                })?;
                t[i] = sc(y);
            }
            Some(t)
        }
        Some(TargetMode::StandardizedRaw { mu, sigma }) => {
            let mut t = Array1::zeros(k);
            for (i, e) in graph.transmission_edges.iter().enumerate() {
                t[i] = sc((e.pl_raw - mu) / sigma);
            }
            Some(t)
        }
    };

    let pl_raw: Vec<f64> = graph.transmission_edges.iter().map(|e| e.pl_raw).collect();
    let pl_base: Vec<f64> = graph
        .transmission_edges
        .iter()
        .map(|e| e.pl_base.unwrap_or(f64::NAN))
        .collect();
    let log_dist: Vec<f64> = graph
        .transmission_edges
        .iter()
        .map(|e| e.features.log_dist())
        .collect();

    if image.size != config.image_size {
        return Err(ModelError::ShapeMismatch(format!(
            "image size {} does not match configured {}",
            image.size, config.image_size
        )));
    }
    let s = image.size;
    let mut img = Array3::zeros((3, s, s));
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                img[[c, y, x]] = sc(image.get(c, y, x));
            }
        }
    }

    Ok(GraphTensors {
        num_nodes: n,
        edge_src,
        edge_dst,
        edge_feats,
        node_feats,
        in_edges,
        trans_slots,
        targets,
        pl_raw,
        pl_base,
        log_dist,
        image: img,
        snapshot_id: graph.snapshot_id,
        tx_vehicle_id: graph.tx_vehicle_id,
    })
}
