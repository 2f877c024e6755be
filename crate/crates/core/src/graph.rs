//! ESPL graph construction: one Tx node plus the K nearest Rx nodes,
//! transmission edges carrying features and oracle labels, and KNN
//! correlation edges between Rxs.

use crate::baseline::{baseline_pl_log, residual_target, BaselineModel};
use crate::features::{extract_link_features, FeatureParams, LinkFeatures, LinkType};
use crate::oracle::{oracle_path_loss_indexed, OracleParams};
use crate::scene::Scene;
use crate::trajectory::Snapshot;
use crate::{CoreError, Point3, Result};
use serde::{Deserialize, Serialize};

/// Graph fan-out parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Number of nearest Rxs per snapshot.
    pub k: usize,
    /// Rx-Rx KNN neighbor count for correlation edges.
    pub k_corr: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { k: 50, k_corr: 4 }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_corr == 0 || self.k_corr >= self.k {
            return Err(CoreError::InvalidConfig(format!(
                "require 1 <= k_corr < K, got k_corr = {}, K = {}",
                self.k_corr, self.k
            )));
        }
        Ok(())
    }
}

/// Node in the ESPL graph. Node 0 is the Tx; the rest are Rxs ordered by
/// distance from the Tx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub position: Point3,
    pub is_tx: bool,
}

/// Tx-Rx edge with oracle label and (optionally) baseline-derived targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionEdge {
    pub tx_index: usize,
    pub rx_index: usize,
    pub features: LinkFeatures,
    pub pl_raw: f64,
    pub pl_base: Option<f64>,
    pub y_target: Option<f64>,
}

/// Directed Rx-Rx correlation edge; each undirected KNN pair is materialized
/// in both orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEdge {
    pub src: usize,
    pub dst: usize,
    pub features: LinkFeatures,
}

/// Per-snapshot environment sensing path loss graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ESPLGraph {
    pub nodes: Vec<GraphNode>,
    pub transmission_edges: Vec<TransmissionEdge>,
    pub correlation_edges: Vec<CorrelationEdge>,
    pub snapshot_id: u32,
    pub tx_vehicle_id: u32,
}

impl ESPLGraph {
    pub fn k(&self) -> usize {
        self.transmission_edges.len()
    }

    /// Structural invariant check used by dataset builds and tests.
    pub fn check_invariants(&self) -> Result<()> {
        let tx_count = self.nodes.iter().filter(|n| n.is_tx).count();
        if tx_count != 1 || !self.nodes[0].is_tx {
            return Err(CoreError::InvalidConfig(
                "graph must have exactly one Tx node at index 0".into(),
            ));
        }
        let k = self.nodes.len() - 1;
        if self.transmission_edges.len() != k {
            return Err(CoreError::InvalidConfig(
                "one transmission edge per Rx node is required".into(),
            ));
        }
        let mut seen_rx = vec![false; self.nodes.len()];
        for e in &self.transmission_edges {
            if e.tx_index != 0 || e.rx_index == 0 || e.rx_index >= self.nodes.len() {
                return Err(CoreError::InvalidConfig("bad transmission edge indices".into()));
            }
            if seen_rx[e.rx_index] {
                return Err(CoreError::InvalidConfig("duplicate transmission edge".into()));
            }
            seen_rx[e.rx_index] = true;
            if e.features.values[crate::features::IDX_IS_TRANSMISSION] != 1.0 {
                return Err(CoreError::InvalidConfig("transmission edge G6 mismatch".into()));
            }
        }
        let mut seen_pairs = std::collections::HashSet::new();
        for e in &self.correlation_edges {
            if e.src == 0 || e.dst == 0 || e.src == e.dst {
                return Err(CoreError::InvalidConfig(
                    "correlation edges must connect distinct Rx nodes".into(),
                ));
            }
            if !seen_pairs.insert((e.src, e.dst)) {
                return Err(CoreError::InvalidConfig("duplicate correlation edge".into()));
            }
            if e.features.values[crate::features::IDX_IS_CORRELATION] != 1.0 {
                return Err(CoreError::InvalidConfig("correlation edge G6 mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Indices of the K Rxs nearest to the snapshot Tx, sorted by distance with
/// ties broken by ascending index.
pub fn select_k_nearest_rx(snapshot: &Snapshot, rx_positions: &[Point3], k: usize) -> Result<Vec<usize>> {
    if k > rx_positions.len() {
        return Err(CoreError::InsufficientRx {
            requested: k,
            available: rx_positions.len(),
        });
    }
    let mut order: Vec<(f64, usize)> = rx_positions
        .iter()
        .enumerate()
        .map(|(i, p)| (crate::distance(&snapshot.tx_position, p), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Undirected KNN pairs (i, j) with i < j over the selected Rx positions.
/// Each Rx links to its `k_corr` nearest peers; distance ties break toward
/// the lower index; duplicates collapse.
pub fn knn_correlation_edges(selected: &[Point3], k_corr: usize) -> Vec<(usize, usize)> {
    let n = selected.len();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (crate::distance(&selected[i], &selected[j]), j))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(k_corr) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs.into_iter().collect()
}

/// Build the ESPL graph for one snapshot. When `baseline` is absent the
/// pl_base / y_target fields stay unset (the pre-baseline dataset pass).
pub fn build_espl_graph(
    scene: &Scene,
    snapshot: &Snapshot,
    oracle_params: &OracleParams,
    baseline: Option<&BaselineModel>,
    graph_config: &GraphConfig,
    feature_params: &FeatureParams,
) -> Result<ESPLGraph> {
    graph_config.validate()?;
    let selected = select_k_nearest_rx(snapshot, &scene.rx_positions, graph_config.k)?;

    let mut nodes = Vec::with_capacity(graph_config.k + 1);
    nodes.push(GraphNode {
        position: snapshot.tx_position,
        is_tx: true,
    });
    for &idx in &selected {
        nodes.push(GraphNode {
            position: scene.rx_positions[idx],
            is_tx: false,
        });
    }

    let mut transmission_edges = Vec::with_capacity(graph_config.k);
    for (slot, &rx_global) in selected.iter().enumerate() {
        let rx = scene.rx_positions[rx_global];
        let features = extract_link_features(
            scene,
            snapshot,
            &snapshot.tx_position,
            &rx,
            LinkType::Transmission,
            feature_params,
        )?;
        let pl_raw = oracle_path_loss_indexed(scene, snapshot, rx_global, oracle_params)?;
        let (pl_base, y_target) = match baseline {
            Some(model) => {
                let base = baseline_pl_log(
                    model,
                    features.log_dist(),
                    features.r_building(),
                    features.r_tree(),
                    features.i_dyn(),
                );
                (
                    Some(base),
                    Some(residual_target(pl_raw, base, model.mu_res, model.sigma_res)),
                )
            }
            None => (None, None),
        };
        transmission_edges.push(TransmissionEdge {
            tx_index: 0,
            rx_index: slot + 1,
            features,
            pl_raw,
            pl_base,
            y_target,
        });
    }

    let selected_positions: Vec<Point3> = selected.iter().map(|&i| scene.rx_positions[i]).collect();
    let pairs = knn_correlation_edges(&selected_positions, graph_config.k_corr);
    let mut correlation_edges = Vec::with_capacity(pairs.len() * 2);
    for (i, j) in pairs {
        for (a, b) in [(i, j), (j, i)] {
            let features = extract_link_features(
                scene,
                snapshot,
                &selected_positions[a],
                &selected_positions[b],
                LinkType::Correlation,
                feature_params,
            )?;
            correlation_edges.push(CorrelationEdge {
                src: a + 1,
                dst: b + 1,
                features,
            });
        }
    }

    let graph = ESPLGraph {
        nodes,
        transmission_edges,
        correlation_edges,
        snapshot_id: snapshot.snapshot_id,
        tx_vehicle_id: snapshot.tx_vehicle_id,
    };
    graph.check_invariants()?;
    Ok(graph)
}

/// Fill pl_base / y_target on every transmission edge from a fitted baseline.
pub fn attach_baseline(graph: &mut ESPLGraph, baseline: &BaselineModel) {
    for e in &mut graph.transmission_edges {
        let base = baseline_pl_log(
            baseline,
            e.features.log_dist(),
            e.features.r_building(),
            e.features.r_tree(),
            e.features.i_dyn(),
        );
        e.pl_base = Some(base);
        e.y_target = Some(residual_target(e.pl_raw, base, baseline.mu_res, baseline.sigma_res));
    }
}
