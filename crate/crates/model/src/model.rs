//! The full network: edge/node encoders, stacked edge-aware attention
//! layers, visual branch, cross-modal fusion and the regression head, with
//! matching hand-derived backward passes.

use crate::config::{BackboneKind, FusionKind, GnnOperator, ModelConfig};
use crate::nn::{
    avg_pool2, avg_pool2_backward, global_avg_pool, global_avg_pool_backward, relu, relu3,
    relu3_backward, relu_backward, row_softmax, row_softmax_backward, segment_softmax,
    segment_softmax_backward, sigmoid, Conv3x3, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache,
};
use crate::params::{Grads, ParamGroup, ParamStore};
use crate::scalar::{sc, to_f64, Scalar};
use crate::tensorize::GraphTensors;
use crate::{ModelError, Result};
use mmresgnn_core::features::{GROUP_RANGES, NUM_FEATURES};
use mmresgnn_core::rng::{rng_from_seed, subseed};
use ndarray::{s, Array1, Array2, Array3};

const LEAKY_SLOPE: f64 = 0.2;

// ---------------------------------------------------------------------------
// Edge encoder
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum EdgeEncoderKind {
    Grouped(Vec<Linear>),
    Flat(Linear),
}

#[derive(Debug, Clone)]
struct EdgeEncoder {
    kind: EdgeEncoderKind,
    proj: Linear,
    ln: LayerNorm,
}

struct EdgeEncoderCache<T> {
    x: Array2<T>,
    hidden: Array2<T>,
    proj_out_ln: LayerNormCache<T>,
}

impl EdgeEncoder {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        let total: usize = config.group_dim_sum();
        let kind = if config.flat_edge_encoder {
            EdgeEncoderKind::Flat(Linear::new(
                store,
                "edge_enc.flat",
                ParamGroup::EdgeEncoder,
                NUM_FEATURES,
                total,
                rng,
            ))
        } else {
            EdgeEncoderKind::Grouped(
                (0..6)
                    .map(|g| {
                        let (lo, hi) = GROUP_RANGES[g];
                        Linear::new(
                            store,
                            &format!("edge_enc.group{g}"),
                            ParamGroup::EdgeEncoder,
                            hi - lo,
                            config.edge_group_dims[g],
                            rng,
                        )
                    })
                    .collect(),
            )
        };
        let proj = Linear::new(
            store,
            "edge_enc.proj",
            ParamGroup::EdgeEncoder,
            total,
            config.hidden_dim,
            rng,
        );
        let ln = LayerNorm::new(store, "edge_enc.ln", ParamGroup::EdgeEncoder, config.hidden_dim);
        Self { kind, proj, ln }
    }

    fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
    ) -> (Array2<T>, EdgeEncoderCache<T>) {
        let hidden = match &self.kind {
            EdgeEncoderKind::Flat(lin) => relu(&lin.forward(store, x)),
            EdgeEncoderKind::Grouped(lins) => {
                let total: usize = lins.iter().map(|l| l.out_dim).sum();
                let mut h = Array2::zeros((x.nrows(), total));
                let mut off = 0;
                for (g, lin) in lins.iter().enumerate() {
                    let (lo, hi) = GROUP_RANGES[g];
                    let xg = x.slice(s![.., lo..hi]).to_owned();
                    let hg = relu(&lin.forward(store, &xg));
                    h.slice_mut(s![.., off..off + lin.out_dim]).assign(&hg);
                    off += lin.out_dim;
                }
                h
            }
        };
        let proj_out = self.proj.forward(store, &hidden);
        let (y, ln_cache) = self.ln.forward(store, &proj_out);
        (
            y,
            EdgeEncoderCache {
                x: x.clone(),
                hidden,
                proj_out_ln: ln_cache,
            },
        )
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &EdgeEncoderCache<T>,
        dy: &Array2<T>,
        grads: &mut Grads<T>,
    ) {
        let dproj_out = self.ln.backward(store, &cache.proj_out_ln, dy, grads);
        let dhidden = self.proj.backward(store, &cache.hidden, &dproj_out, grads);
        let dhidden = relu_backward(&cache.hidden, &dhidden);
        match &self.kind {
            EdgeEncoderKind::Flat(lin) => {
                let _ = lin.backward(store, &cache.x, &dhidden, grads);
            }
            EdgeEncoderKind::Grouped(lins) => {
                let mut off = 0;
                for (g, lin) in lins.iter().enumerate() {
                    let (lo, hi) = GROUP_RANGES[g];
                    let xg = cache.x.slice(s![.., lo..hi]).to_owned();
                    let dhg = dhidden.slice(s![.., off..off + lin.out_dim]).to_owned();
                    let _ = lin.backward(store, &xg, &dhg, grads);
                    off += lin.out_dim;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Attention layer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct AttentionLayer {
    op: GnnOperator,
    heads: usize,
    head_dim: usize,
    dim: usize,
    wq: Option<Linear>,
    wk: Option<Linear>,
    wv: Linear,
    we: Option<Linear>,
    gat_a_src: Option<crate::params::ParamId>,
    gat_a_dst: Option<crate::params::ParamId>,
    wo: Linear,
    ln: LayerNorm,
    gate_l1: Linear,
    gate_l2: Linear,
}

struct AttentionCache<T> {
    h_n: Array2<T>,
    h_e: Array2<T>,
    /// Updated node states consumed by the edge refinement.
    h_n_next: Array2<T>,
    q: Option<Array2<T>>,
    k: Option<Array2<T>>,
    v: Array2<T>,
    ek: Option<Array2<T>>,
    gat_pre: Option<Array2<T>>,
    alpha: Array2<T>,
    agg: Array2<T>,
    ln_cache: LayerNormCache<T>,
    gate_hidden: Array2<T>,
    gate_coeff: Array2<T>,
}

impl AttentionLayer {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        idx: usize,
        config: &ModelConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        let d = config.hidden_dim;
        let op = config.gnn_operator;
        let name = format!("gnn.layer{idx}");
        let heads = config.num_heads;
        let head_dim = config.head_dim();
        let lin = |store: &mut ParamStore<T>, suffix: &str, ind, outd, rng: &mut _| {
            Linear::new(store, &format!("{name}.{suffix}"), ParamGroup::Gnn, ind, outd, rng)
        };
        let (wq, wk) = match op {
            GnnOperator::Gcn => (None, None),
            _ => (
                Some(lin(store, "wq", d, d, rng)),
                Some(lin(store, "wk", d, d, rng)),
            ),
        };
        let wv = lin(store, "wv", d, d, rng);
        let we = match op {
            GnnOperator::EdgeTransformer => Some(lin(store, "we", d, d, rng)),
            _ => None,
        };
        let (gat_a_src, gat_a_dst) = if op == GnnOperator::Gat {
            (
                Some(store.add_xavier(
                    &format!("{name}.a_src"),
                    ParamGroup::Gnn,
                    heads,
                    head_dim,
                    head_dim,
                    1,
                    rng,
                )),
                Some(store.add_xavier(
                    &format!("{name}.a_dst"),
                    ParamGroup::Gnn,
                    heads,
                    head_dim,
                    head_dim,
                    1,
                    rng,
                )),
            )
        } else {
            (None, None)
        };
        let wo = lin(store, "wo", d, d, rng);
        let ln = LayerNorm::new(store, &format!("{name}.ln"), ParamGroup::Gnn, d);
        let gate_l1 = lin(store, "gate.l1", 3 * d, d, rng);
        let gate_l2 = lin(store, "gate.l2", d, 3, rng);
        Self {
            op,
            heads,
            head_dim,
            dim: d,
            wq,
            wk,
            wv,
            we,
            gat_a_src,
            gat_a_dst,
            wo,
            ln,
            gate_l1,
            gate_l2,
        }
    }

    fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        h_n: &Array2<T>,
        h_e: &Array2<T>,
        g: &GraphTensors<T>,
    ) -> (Array2<T>, Array2<T>, AttentionCache<T>) {
        let e_count = g.num_edges();
        let dk = self.head_dim;
        let inv_sqrt = sc::<T>(1.0 / (dk as f64).sqrt());

        let v = self.wv.forward(store, h_n);
        let (q, k, ek, gat_pre, alpha) = match self.op {
            GnnOperator::EdgeTransformer => {
                let q = self.wq.as_ref().unwrap().forward(store, h_n);
                let k = self.wk.as_ref().unwrap().forward(store, h_n);
                let ek = self.we.as_ref().unwrap().forward(store, h_e);
                let mut logits = Array2::zeros((e_count, self.heads));
                for e in 0..e_count {
                    let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
                    for h in 0..self.heads {
                        let lo = h * dk;
                        let mut acc = T::zero();
                        for j in 0..dk {
                            acc = acc + q[[dst, lo + j]] * (k[[src, lo + j]] + ek[[e, lo + j]]);
                        }
                        logits[[e, h]] = acc * inv_sqrt;
                    }
                }
                let alpha = segment_softmax(&logits, &g.in_edges);
                (Some(q), Some(k), Some(ek), None, alpha)
            }
            GnnOperator::Gat => {
                let q = self.wq.as_ref().unwrap().forward(store, h_n);
                let k = self.wk.as_ref().unwrap().forward(store, h_n);
                let a_src = store.get(self.gat_a_src.unwrap());
                let a_dst = store.get(self.gat_a_dst.unwrap());
                let mut pre = Array2::zeros((e_count, self.heads));
                for e in 0..e_count {
                    let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
                    for h in 0..self.heads {
                        let lo = h * dk;
                        let mut acc = T::zero();
                        for j in 0..dk {
                            acc = acc + a_src[[h, j]] * q[[dst, lo + j]] + a_dst[[h, j]] * k[[src, lo + j]];
                        }
                        pre[[e, h]] = acc;
                    }
                }
                let slope = sc::<T>(LEAKY_SLOPE);
                let logits = pre.mapv(|x| if x > T::zero() { x } else { slope * x });
                let alpha = segment_softmax(&logits, &g.in_edges);
                (Some(q), Some(k), None, Some(pre), alpha)
            }
            GnnOperator::Gcn => {
                let mut alpha = Array2::zeros((e_count, self.heads));
                for (dst, edges) in g.in_edges.iter().enumerate() {
                    let _ = dst;
                    if edges.is_empty() {
                        continue;
                    }
                    let w = sc::<T>(1.0 / edges.len() as f64);
                    for &e in edges {
                        for h in 0..self.heads {
                            alpha[[e, h]] = w;
                        }
                    }
                }
                (None, None, None, None, alpha)
            }
        };

        // Attention-weighted aggregation of values.
        let mut agg: Array2<T> = Array2::zeros((g.num_nodes, self.dim));
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            for h in 0..self.heads {
                let lo = h * dk;
                let a = alpha[[e, h]];
                for j in 0..dk {
                    agg[[dst, lo + j]] = agg[[dst, lo + j]] + a * v[[src, lo + j]];
                }
            }
        }
        let attn = self.wo.forward(store, &agg);
        let (h_n_next, ln_cache) = self.ln.forward(store, &(h_n + &attn));

        // Adaptive edge refinement after message passing, reading the
        // updated node states.
        let mut gate_in = Array2::zeros((e_count, 3 * self.dim));
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            gate_in.slice_mut(s![e, 0..self.dim]).assign(&h_e.row(e));
            gate_in
                .slice_mut(s![e, self.dim..2 * self.dim])
                .assign(&h_n_next.row(src));
            gate_in
                .slice_mut(s![e, 2 * self.dim..3 * self.dim])
                .assign(&h_n_next.row(dst));
        }
        let gate_hidden = relu(&self.gate_l1.forward(store, &gate_in));
        let gate_coeff = row_softmax(&self.gate_l2.forward(store, &gate_hidden));
        let mut h_e_next = Array2::zeros(h_e.raw_dim());
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            let (a, b, c) = (gate_coeff[[e, 0]], gate_coeff[[e, 1]], gate_coeff[[e, 2]]);
            for j in 0..self.dim {
                h_e_next[[e, j]] =
                    a * h_e[[e, j]] + b * h_n_next[[src, j]] + c * h_n_next[[dst, j]];
            }
        }

        let cache = AttentionCache {
            h_n: h_n.clone(),
            h_e: h_e.clone(),
            h_n_next: h_n_next.clone(),
            q,
            k,
            v,
            ek,
            gat_pre,
            alpha,
            agg,
            ln_cache,
            gate_hidden,
            gate_coeff,
        };
        (h_n_next, h_e_next, cache)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &AttentionCache<T>,
        g: &GraphTensors<T>,
        dh_n_next: &Array2<T>,
        dh_e_next: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> (Array2<T>, Array2<T>) {
        let e_count = g.num_edges();
        let dk = self.head_dim;
        let inv_sqrt = sc::<T>(1.0 / (dk as f64).sqrt());
        let mut dh_e: Array2<T> = Array2::zeros(cache.h_e.raw_dim());
        // Gradient w.r.t. the updated node states: upstream plus the edge
        // refinement contributions.
        let mut dh_nn: Array2<T> = dh_n_next.clone();

        // Edge refinement path.
        let mut dcoeff = Array2::zeros((e_count, 3));
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            let (a, b, c) = (
                cache.gate_coeff[[e, 0]],
                cache.gate_coeff[[e, 1]],
                cache.gate_coeff[[e, 2]],
            );
            let mut da = T::zero();
            let mut db = T::zero();
            let mut dc = T::zero();
            for j in 0..self.dim {
                let gout = dh_e_next[[e, j]];
                da = da + gout * cache.h_e[[e, j]];
                db = db + gout * cache.h_n_next[[src, j]];
                dc = dc + gout * cache.h_n_next[[dst, j]];
                dh_e[[e, j]] = dh_e[[e, j]] + a * gout;
                dh_nn[[src, j]] = dh_nn[[src, j]] + b * gout;
                dh_nn[[dst, j]] = dh_nn[[dst, j]] + c * gout;
            }
            dcoeff[[e, 0]] = da;
            dcoeff[[e, 1]] = db;
            dcoeff[[e, 2]] = dc;
        }
        let dgate_logits = row_softmax_backward(&cache.gate_coeff, &dcoeff);
        let dgate_hidden = self.gate_l2.backward(store, &cache.gate_hidden, &dgate_logits, grads);
        let dgate_hidden = relu_backward(&cache.gate_hidden, &dgate_hidden);
        // Rebuild the gate input for the weight gradient.
        let mut gate_in = Array2::zeros((e_count, 3 * self.dim));
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            gate_in.slice_mut(s![e, 0..self.dim]).assign(&cache.h_e.row(e));
            gate_in
                .slice_mut(s![e, self.dim..2 * self.dim])
                .assign(&cache.h_n_next.row(src));
            gate_in
                .slice_mut(s![e, 2 * self.dim..3 * self.dim])
                .assign(&cache.h_n_next.row(dst));
        }
        let dgate_in = self.gate_l1.backward(store, &gate_in, &dgate_hidden, grads);
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            for j in 0..self.dim {
                dh_e[[e, j]] = dh_e[[e, j]] + dgate_in[[e, j]];
                dh_nn[[src, j]] = dh_nn[[src, j]] + dgate_in[[e, self.dim + j]];
                dh_nn[[dst, j]] = dh_nn[[dst, j]] + dgate_in[[e, 2 * self.dim + j]];
            }
        }

        // Node update path.
        let dx = self.ln.backward(store, &cache.ln_cache, &dh_nn, grads);
        let mut dh_n: Array2<T> = dx.clone();
        let dagg = self.wo.backward(store, &cache.agg, &dx, grads);

        let mut dalpha = Array2::zeros((e_count, self.heads));
        let mut dv: Array2<T> = Array2::zeros(cache.v.raw_dim());
        for e in 0..e_count {
            let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
            for h in 0..self.heads {
                let lo = h * dk;
                let a = cache.alpha[[e, h]];
                let mut acc = T::zero();
                for j in 0..dk {
                    acc = acc + dagg[[dst, lo + j]] * cache.v[[src, lo + j]];
                    dv[[src, lo + j]] = dv[[src, lo + j]] + a * dagg[[dst, lo + j]];
                }
                dalpha[[e, h]] = acc;
            }
        }
        dh_n += &self.wv.backward(store, &cache.h_n, &dv, grads);

        match self.op {
            GnnOperator::EdgeTransformer => {
                let dlogits = segment_softmax_backward(&cache.alpha, &dalpha, &g.in_edges);
                let q = cache.q.as_ref().unwrap();
                let k = cache.k.as_ref().unwrap();
                let ek = cache.ek.as_ref().unwrap();
                let mut dq: Array2<T> = Array2::zeros(q.raw_dim());
                let mut dkm: Array2<T> = Array2::zeros(k.raw_dim());
                let mut dek: Array2<T> = Array2::zeros(ek.raw_dim());
                for e in 0..e_count {
                    let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
                    for h in 0..self.heads {
                        let lo = h * dk;
                        let dl = dlogits[[e, h]] * inv_sqrt;
                        for j in 0..dk {
                            dq[[dst, lo + j]] =
                                dq[[dst, lo + j]] + dl * (k[[src, lo + j]] + ek[[e, lo + j]]);
                            dkm[[src, lo + j]] = dkm[[src, lo + j]] + dl * q[[dst, lo + j]];
                            dek[[e, lo + j]] = dek[[e, lo + j]] + dl * q[[dst, lo + j]];
                        }
                    }
                }
                dh_n += &self.wq.as_ref().unwrap().backward(store, &cache.h_n, &dq, grads);
                dh_n += &self.wk.as_ref().unwrap().backward(store, &cache.h_n, &dkm, grads);
                dh_e += &self.we.as_ref().unwrap().backward(store, &cache.h_e, &dek, grads);
            }
            GnnOperator::Gat => {
                let dlogits = segment_softmax_backward(&cache.alpha, &dalpha, &g.in_edges);
                let pre = cache.gat_pre.as_ref().unwrap();
                let slope = sc::<T>(LEAKY_SLOPE);
                let q = cache.q.as_ref().unwrap();
                let k = cache.k.as_ref().unwrap();
                let a_src = store.get(self.gat_a_src.unwrap()).clone();
                let a_dst = store.get(self.gat_a_dst.unwrap()).clone();
                let mut dq: Array2<T> = Array2::zeros(q.raw_dim());
                let mut dkm: Array2<T> = Array2::zeros(k.raw_dim());
                let mut da_src: Array2<T> = Array2::zeros(a_src.raw_dim());
                let mut da_dst: Array2<T> = Array2::zeros(a_dst.raw_dim());
                for e in 0..e_count {
                    let (src, dst) = (g.edge_src[e], g.edge_dst[e]);
                    for h in 0..self.heads {
                        let lo = h * dk;
                        let grad_lrelu = if pre[[e, h]] > T::zero() { T::one() } else { slope };
                        let dl = dlogits[[e, h]] * grad_lrelu;
                        for j in 0..dk {
                            dq[[dst, lo + j]] = dq[[dst, lo + j]] + dl * a_src[[h, j]];
                            dkm[[src, lo + j]] = dkm[[src, lo + j]] + dl * a_dst[[h, j]];
                            da_src[[h, j]] = da_src[[h, j]] + dl * q[[dst, lo + j]];
                            da_dst[[h, j]] = da_dst[[h, j]] + dl * k[[src, lo + j]];
                        }
                    }
                }
                grads.acc(self.gat_a_src.unwrap(), &da_src);
                grads.acc(self.gat_a_dst.unwrap(), &da_dst);
                dh_n += &self.wq.as_ref().unwrap().backward(store, &cache.h_n, &dq, grads);
                dh_n += &self.wk.as_ref().unwrap().backward(store, &cache.h_n, &dkm, grads);
            }
            GnnOperator::Gcn => {}
        }

        (dh_n, dh_e)
    }
}

// ---------------------------------------------------------------------------
// Visual branch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct VisualBranch {
    stages: Vec<Vec<Conv3x3>>,
    feature_dim: usize,
}

struct VisualCache<T> {
    /// Per conv: (im2col cache, relu output).
    convs: Vec<(Array2<T>, Array3<T>)>,
    /// Input spatial size per stage.
    stage_sizes: Vec<usize>,
    /// Output (C,H,W) before global pooling.
    final_map_dim: (usize, usize, usize),
}

impl VisualBranch {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        let vf = config.visual_feature_dim;
        let widths = [vf / 8, vf / 4, vf / 2, vf];
        let convs_per_stage = match config.backbone {
            BackboneKind::CompactCnn => 1,
            BackboneKind::DeepCnn => 2,
        };
        let mut stages = Vec::new();
        let mut in_ch = 3;
        for (si, &out_ch) in widths.iter().enumerate() {
            let mut stage = Vec::new();
            for ci in 0..convs_per_stage {
                stage.push(Conv3x3::new(
                    store,
                    &format!("visual.stage{si}.conv{ci}"),
                    ParamGroup::VisualBackbone(si),
                    in_ch,
                    out_ch,
                    rng,
                ));
                in_ch = out_ch;
            }
            stages.push(stage);
        }
        Self {
            stages,
            feature_dim: vf,
        }
    }

    fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        image: &Array3<T>,
    ) -> (Array2<T>, VisualCache<T>) {
        let mut x = image.clone();
        let mut convs = Vec::new();
        let mut stage_sizes = Vec::new();
        for stage in &self.stages {
            stage_sizes.push(x.dim().1);
            for conv in stage {
                let (y, cols) = conv.forward(store, &x);
                let y = relu3(&y);
                convs.push((cols, y.clone()));
                x = y;
            }
            x = avg_pool2(&x);
        }
        let final_map_dim = x.dim();
        let z = global_avg_pool(&x);
        (
            z,
            VisualCache {
                convs,
                stage_sizes,
                final_map_dim,
            },
        )
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &VisualCache<T>,
        dz: &Array2<T>,
        grads: &mut Grads<T>,
    ) {
        let (c, h, w) = cache.final_map_dim;
        let mut dx = global_avg_pool_backward(dz, c, h, w);
        let mut conv_idx = cache.convs.len();
        for (si, stage) in self.stages.iter().enumerate().rev() {
            let in_size = cache.stage_sizes[si];
            dx = avg_pool2_backward(&dx, in_size, in_size);
            for conv in stage.iter().rev() {
                conv_idx -= 1;
                let (cols, relu_out) = &cache.convs[conv_idx];
                let dy = relu3_backward(relu_out, &dx);
                dx = conv.backward(store, cols, &dy, grads);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Fusion {
    Gated { gate: Linear },
    Concat { proj: Linear },
    Cross {
        wq: Linear,
        wk: Linear,
        wv: Linear,
        wo: Linear,
    },
}

struct FusionCache<T> {
    f_geo: Array2<T>,
    f_vis: Array2<T>,
    /// Gated: sigmoid weights per edge.
    w: Option<Array1<T>>,
    /// Cross-attention intermediates.
    cross: Option<CrossCache<T>>,
}

struct CrossCache<T> {
    q: Array2<T>,
    kg: Array2<T>,
    kv: Array2<T>,
    vg: Array2<T>,
    vv: Array2<T>,
    attn: Array2<T>,
    out: Array2<T>,
}

impl Fusion {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        let d = config.hidden_dim;
        match config.fusion {
            FusionKind::Gated => {
                let gate = Linear::new(store, "fusion.gate", ParamGroup::FusionGate, 2 * d, 1, rng);
                // Start balanced (w = 0.5) with a low-slope gate so neither
                // branch is starved of gradient before it has learned.
                store.get_mut(gate.w).mapv_inplace(|v| v * sc(0.1));
                store.get_mut(gate.b).mapv_inplace(|_| T::zero());
                Fusion::Gated { gate }
            }
            FusionKind::Concat => Fusion::Concat {
                proj: Linear::new(store, "fusion.concat", ParamGroup::FusionGate, 2 * d, d, rng),
            },
            FusionKind::CrossAttention => Fusion::Cross {
                wq: Linear::new(store, "fusion.cross.wq", ParamGroup::FusionGate, d, d, rng),
                wk: Linear::new(store, "fusion.cross.wk", ParamGroup::FusionGate, d, d, rng),
                wv: Linear::new(store, "fusion.cross.wv", ParamGroup::FusionGate, d, d, rng),
                wo: Linear::new(store, "fusion.cross.wo", ParamGroup::FusionGate, d, d, rng),
            },
        }
    }

    fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f_geo: &Array2<T>,
        f_vis: &Array2<T>,
    ) -> (Array2<T>, FusionCache<T>) {
        let k = f_geo.nrows();
        let d = f_geo.ncols();
        match self {
            Fusion::Gated { gate } => {
                let mut joint = Array2::zeros((k, 2 * d));
                joint.slice_mut(s![.., 0..d]).assign(f_geo);
                joint.slice_mut(s![.., d..2 * d]).assign(f_vis);
                let pre = gate.forward(store, &joint);
                let w = pre.column(0).mapv(sigmoid);
                let mut out = Array2::zeros((k, d));
                for i in 0..k {
                    for j in 0..d {
                        out[[i, j]] = w[i] * f_geo[[i, j]] + (T::one() - w[i]) * f_vis[[i, j]];
                    }
                }
                (
                    out,
                    FusionCache {
                        f_geo: f_geo.clone(),
                        f_vis: f_vis.clone(),
                        w: Some(w),
                        cross: None,
                    },
                )
            }
            Fusion::Concat { proj } => {
                let mut joint = Array2::zeros((k, 2 * d));
                joint.slice_mut(s![.., 0..d]).assign(f_geo);
                joint.slice_mut(s![.., d..2 * d]).assign(f_vis);
                let out = proj.forward(store, &joint);
                (
                    out,
                    FusionCache {
                        f_geo: f_geo.clone(),
                        f_vis: f_vis.clone(),
                        w: None,
                        cross: None,
                    },
                )
            }
            Fusion::Cross { wq, wk, wv, wo } => {
                let inv_sqrt = sc::<T>(1.0 / (d as f64).sqrt());
                let q = wq.forward(store, f_geo);
                let kg = wk.forward(store, f_geo);
                let kv = wk.forward(store, f_vis);
                let vg = wv.forward(store, f_geo);
                let vv = wv.forward(store, f_vis);
                let mut scores = Array2::zeros((k, 2));
                for i in 0..k {
                    let mut sg = T::zero();
                    let mut sv = T::zero();
                    for j in 0..d {
                        sg = sg + q[[i, j]] * kg[[i, j]];
                        sv = sv + q[[i, j]] * kv[[i, j]];
                    }
                    scores[[i, 0]] = sg * inv_sqrt;
                    scores[[i, 1]] = sv * inv_sqrt;
                }
                let attn = row_softmax(&scores);
                let mut mixed = Array2::zeros((k, d));
                for i in 0..k {
                    for j in 0..d {
                        mixed[[i, j]] = attn[[i, 0]] * vg[[i, j]] + attn[[i, 1]] * vv[[i, j]];
                    }
                }
                let out_proj = wo.forward(store, &mixed);
                let out = f_geo + &out_proj;
                (
                    out,
                    FusionCache {
                        f_geo: f_geo.clone(),
                        f_vis: f_vis.clone(),
                        w: None,
                        cross: Some(CrossCache {
                            q,
                            kg,
                            kv,
                            vg,
                            vv,
                            attn,
                            out: mixed,
                        }),
                    },
                )
            }
        }
    }

    fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &FusionCache<T>,
        dout: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> (Array2<T>, Array2<T>) {
        let k = cache.f_geo.nrows();
        let d = cache.f_geo.ncols();
        match self {
            Fusion::Gated { gate } => {
                let w = cache.w.as_ref().unwrap();
                let mut df_geo = Array2::zeros((k, d));
                let mut df_vis = Array2::zeros((k, d));
                let mut dpre = Array2::zeros((k, 1));
                for i in 0..k {
                    let mut dw = T::zero();
                    for j in 0..d {
                        let g = dout[[i, j]];
                        df_geo[[i, j]] = w[i] * g;
                        df_vis[[i, j]] = (T::one() - w[i]) * g;
                        dw = dw + g * (cache.f_geo[[i, j]] - cache.f_vis[[i, j]]);
                    }
                    dpre[[i, 0]] = dw * w[i] * (T::one() - w[i]);
                }
                let mut joint = Array2::zeros((k, 2 * d));
                joint.slice_mut(s![.., 0..d]).assign(&cache.f_geo);
                joint.slice_mut(s![.., d..2 * d]).assign(&cache.f_vis);
                let djoint = gate.backward(store, &joint, &dpre, grads);
                df_geo += &djoint.slice(s![.., 0..d]);
                df_vis += &djoint.slice(s![.., d..2 * d]);
                (df_geo, df_vis)
            }
            Fusion::Concat { proj } => {
                let mut joint = Array2::zeros((k, 2 * d));
                joint.slice_mut(s![.., 0..d]).assign(&cache.f_geo);
                joint.slice_mut(s![.., d..2 * d]).assign(&cache.f_vis);
                let djoint = proj.backward(store, &joint, dout, grads);
                (
                    djoint.slice(s![.., 0..d]).to_owned(),
                    djoint.slice(s![.., d..2 * d]).to_owned(),
                )
            }
            Fusion::Cross { wq, wk, wv, wo } => {
                let cc = cache.cross.as_ref().unwrap();
                let inv_sqrt = sc::<T>(1.0 / (d as f64).sqrt());
                let mut df_geo = dout.clone();
                let dmixed = wo.backward(store, &cc.out, dout, grads);
                let mut dattn = Array2::zeros((k, 2));
                let mut dvg = Array2::zeros((k, d));
                let mut dvv = Array2::zeros((k, d));
                for i in 0..k {
                    let mut dag = T::zero();
                    let mut dav = T::zero();
                    for j in 0..d {
                        let g = dmixed[[i, j]];
                        dag = dag + g * cc.vg[[i, j]];
                        dav = dav + g * cc.vv[[i, j]];
                        dvg[[i, j]] = cc.attn[[i, 0]] * g;
                        dvv[[i, j]] = cc.attn[[i, 1]] * g;
                    }
                    dattn[[i, 0]] = dag;
                    dattn[[i, 1]] = dav;
                }
                let dscores = row_softmax_backward(&cc.attn, &dattn);
                let mut dq = Array2::zeros((k, d));
                let mut dkg = Array2::zeros((k, d));
                let mut dkv = Array2::zeros((k, d));
                for i in 0..k {
                    let dsg = dscores[[i, 0]] * inv_sqrt;
                    let dsv = dscores[[i, 1]] * inv_sqrt;
                    for j in 0..d {
                        dq[[i, j]] = dsg * cc.kg[[i, j]] + dsv * cc.kv[[i, j]];
                        dkg[[i, j]] = dsg * cc.q[[i, j]];
                        dkv[[i, j]] = dsv * cc.q[[i, j]];
                    }
                }
                df_geo += &wq.backward(store, &cache.f_geo, &dq, grads);
                df_geo += &wk.backward(store, &cache.f_geo, &dkg, grads);
                let mut df_vis = wk.backward(store, &cache.f_vis, &dkv, grads);
                df_geo += &wv.backward(store, &cache.f_geo, &dvg, grads);
                df_vis += &wv.backward(store, &cache.f_vis, &dvv, grads);
                (df_geo, df_vis)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// The assembled network. Training runs `T = f32`; gradient verification
/// instantiates the same structure with `T = f64`.
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    node_encoder: Option<Mlp>,
    edge_encoder: Option<EdgeEncoder>,
    layers: Vec<AttentionLayer>,
    visual: Option<VisualBranch>,
    visual_proj: Option<Linear>,
    visual_ln: Option<LayerNorm>,
    fusion: Option<Fusion>,
    head: Option<Mlp>,
    vision_head: Option<Mlp>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T> {
    edge_enc: Option<EdgeEncoderCache<T>>,
    node_enc: Option<MlpCache<T>>,
    layer_caches: Vec<AttentionCache<T>>,
    h_e_final: Option<Array2<T>>,
    visual: Option<VisualCache<T>>,
    visual_z: Option<Array2<T>>,
    visual_ln: Option<LayerNormCache<T>>,
    fusion: Option<FusionCache<T>>,
    head: Option<MlpCache<T>>,
    vision_head_in: Option<Array2<T>>,
    vision_head_cache: Option<MlpCache<T>>,
    pub preds: Array1<T>,
}

/// Softmax-closure and gate diagnostics extracted from one forward pass.
#[derive(Debug, Clone)]
pub struct ModelDiagnostics {
    /// Sum of attention weights per (node, head) segment, all layers.
    pub attention_sums: Vec<f64>,
    /// Sum of each (alpha, beta, gamma) edge-gate triplet, all layers.
    pub gate_triplet_sums: Vec<f64>,
    /// Fusion gate scalars (gated fusion only).
    pub fusion_gates: Vec<f64>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(subseed(config.seed, 0x4d4f_4445));
        let mut store = ParamStore::new();
        let d = config.hidden_dim;

        let mut node_encoder = None;
        let mut edge_encoder = None;
        let mut layers = Vec::new();
        let mut visual = None;
        let mut visual_proj = None;
        let mut visual_ln = None;
        let mut fusion = None;
        let mut head = None;
        let mut vision_head = None;

        if config.vision_only {
            let vb = VisualBranch::new(&mut store, &config, &mut rng);
            vision_head = Some(Mlp::new(
                &mut store,
                "vision_head",
                ParamGroup::Head,
                vb.feature_dim + 1,
                d,
                1,
                &mut rng,
            ));
            visual = Some(vb);
        } else {
            edge_encoder = Some(EdgeEncoder::new(&mut store, &config, &mut rng));
            node_encoder = Some(Mlp::new(
                &mut store,
                "node_enc",
                ParamGroup::NodeEncoder,
                4,
                d,
                d,
                &mut rng,
            ));
            for i in 0..config.num_layers {
                layers.push(AttentionLayer::new(&mut store, i, &config, &mut rng));
            }
            if config.use_visual {
                let vb = VisualBranch::new(&mut store, &config, &mut rng);
                visual_proj = Some(Linear::new(
                    &mut store,
                    "visual.proj",
                    ParamGroup::VisualProj,
                    vb.feature_dim,
                    d,
                    &mut rng,
                ));
                // Keeps the visual features on the same scale as the
                // layer-normalized geometry embeddings.
                visual_ln = Some(LayerNorm::new(&mut store, "visual.ln", ParamGroup::VisualProj, d));
                visual = Some(vb);
            }
            fusion = Some(Fusion::new(&mut store, &config, &mut rng));
            head = Some(Mlp::new(&mut store, "head", ParamGroup::Head, d, d, 1, &mut rng));
        }

        Ok(Self {
            config,
            store,
            node_encoder,
            edge_encoder,
            layers,
            visual,
            visual_proj,
            visual_ln,
            fusion,
            head,
            vision_head,
        })
    }

    /// Trainability mask under the current freeze settings. With
    /// `head_only` set, only the regression head and fusion gate train
    /// (frozen-backbone transfer strategy).
    pub fn trainable_mask(&self, head_only: bool) -> Vec<bool> {
        self.store
            .entries()
            .iter()
            .map(|e| {
                if head_only {
                    return e.group.is_head();
                }
                match e.group {
                    ParamGroup::VisualBackbone(stage) => stage >= self.config.backbone_freeze_depth,
                    _ => true,
                }
            })
            .collect()
    }

    /// Per-transmission-edge predictions plus the cache needed for backward.
    pub fn forward(&self, g: &GraphTensors<T>) -> Result<ForwardCache<T>> {
        if self.config.vision_only {
            return self.forward_vision_only(g);
        }
        let k = g.k();
        let d = self.config.hidden_dim;

        if self.config.num_layers > 0 {
            if let Some(lonely) = g.in_edges.iter().position(|v| v.is_empty()) {
                return Err(ModelError::IsolatedNode(lonely));
            }
        }

        let edge_encoder = self.edge_encoder.as_ref().unwrap();
        let node_encoder = self.node_encoder.as_ref().unwrap();
        let (mut h_e, edge_enc_cache) = edge_encoder.forward(&self.store, &g.edge_feats);
        let (mut h_n, node_enc_cache) = node_encoder.forward(&self.store, &g.node_feats);

        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (n_next, e_next, cache) = layer.forward(&self.store, &h_n, &h_e, g);
            h_n = n_next;
            h_e = e_next;
            layer_caches.push(cache);
        }

        let mut f_geo = Array2::zeros((k, d));
        for (i, &slot) in g.trans_slots.iter().enumerate() {
            f_geo.row_mut(i).assign(&h_e.row(slot));
        }

        let (f_vis, visual_cache, visual_z, visual_ln_cache) = if self.config.use_visual {
            let vb = self.visual.as_ref().unwrap();
            let (z, vcache) = vb.forward(&self.store, &g.image);
            let p = self.visual_proj.as_ref().unwrap().forward(&self.store, &z);
            let (p, ln_cache) = self.visual_ln.as_ref().unwrap().forward(&self.store, &p);
            let mut f_vis = Array2::zeros((k, d));
            for i in 0..k {
                f_vis.row_mut(i).assign(&p.row(0));
            }
            (f_vis, Some(vcache), Some(z), Some(ln_cache))
        } else {
            (Array2::zeros((k, d)), None, None, None)
        };

        let fusion = self.fusion.as_ref().unwrap();
        let (f_final, fusion_cache) = fusion.forward(&self.store, &f_geo, &f_vis);
        let head = self.head.as_ref().unwrap();
        let (out, head_cache) = head.forward(&self.store, &f_final);
        let preds = out.column(0).to_owned();

        Ok(ForwardCache {
            edge_enc: Some(edge_enc_cache),
            node_enc: Some(node_enc_cache),
            layer_caches,
            h_e_final: Some(h_e),
            visual: visual_cache,
            visual_z,
            visual_ln: visual_ln_cache,

            fusion: Some(fusion_cache),
            head: Some(head_cache),
            vision_head_in: None,
            vision_head_cache: None,
            preds,
        })
    }

    fn forward_vision_only(&self, g: &GraphTensors<T>) -> Result<ForwardCache<T>> {
        let k = g.k();
        let vb = self.visual.as_ref().unwrap();
        let (z, vcache) = vb.forward(&self.store, &g.image);
        let vf = vb.feature_dim;
        let mut rows = Array2::zeros((k, vf + 1));
        for i in 0..k {
            for j in 0..vf {
                rows[[i, j]] = z[[0, j]];
            }
            rows[[i, vf]] = sc(g.log_dist[i]);
        }
        let head = self.vision_head.as_ref().unwrap();
        let (out, head_cache) = head.forward(&self.store, &rows);
        let preds = out.column(0).to_owned();
        Ok(ForwardCache {
            edge_enc: None,
            node_enc: None,
            layer_caches: Vec::new(),
            h_e_final: None,
            visual: Some(vcache),
            visual_z: Some(z),
            visual_ln: None,

            fusion: None,
            head: None,
            vision_head_in: Some(rows),
            vision_head_cache: Some(head_cache),
            preds,
        })
    }

    /// Backward pass from per-prediction gradients; accumulates into `grads`.
    pub fn backward(&self, g: &GraphTensors<T>, cache: &ForwardCache<T>, dpreds: &Array1<T>, grads: &mut Grads<T>) {
        if self.config.vision_only {
            self.backward_vision_only(g, cache, dpreds, grads);
            return;
        }
        let k = g.k();
        let d = self.config.hidden_dim;
        let dout = {
            let mut m = Array2::zeros((k, 1));
            for i in 0..k {
                m[[i, 0]] = dpreds[i];
            }
            m
        };
        let head = self.head.as_ref().unwrap();
        let df_final = head.backward(&self.store, cache.head.as_ref().unwrap(), &dout, grads);
        let fusion = self.fusion.as_ref().unwrap();
        let (df_geo, df_vis) = fusion.backward(&self.store, cache.fusion.as_ref().unwrap(), &df_final, grads);

        if self.config.use_visual {
            // Collapse the broadcast back onto the projected visual vector.
            let mut dp = Array2::zeros((1, d));
            for i in 0..k {
                for j in 0..d {
                    dp[[0, j]] = dp[[0, j]] + df_vis[[i, j]];
                }
            }
            let dp = self.visual_ln.as_ref().unwrap().backward(
                &self.store,
                cache.visual_ln.as_ref().unwrap(),
                &dp,
                grads,
            );
            let z = cache.visual_z.as_ref().unwrap();
            let dz = self
                .visual_proj
                .as_ref()
                .unwrap()
                .backward(&self.store, z, &dp, grads);
            self.visual
                .as_ref()
                .unwrap()
                .backward(&self.store, cache.visual.as_ref().unwrap(), &dz, grads);
        }

        let h_e_final = cache.h_e_final.as_ref().unwrap();
        let mut dh_e: Array2<T> = Array2::zeros(h_e_final.raw_dim());
        for (i, &slot) in g.trans_slots.iter().enumerate() {
            for j in 0..d {
                dh_e[[slot, j]] = dh_e[[slot, j]] + df_geo[[i, j]];
            }
        }
        let n = g.num_nodes;
        let mut dh_n: Array2<T> = Array2::zeros((n, d));
        for (layer, lcache) in self.layers.iter().zip(cache.layer_caches.iter()).rev() {
            let (dn, de) = layer.backward(&self.store, lcache, g, &dh_n, &dh_e, grads);
            dh_n = dn;
            dh_e = de;
        }
        self.edge_encoder
            .as_ref()
            .unwrap()
            .backward(&self.store, cache.edge_enc.as_ref().unwrap(), &dh_e, grads);
        let _ = self.node_encoder.as_ref().unwrap().backward(
            &self.store,
            cache.node_enc.as_ref().unwrap(),
            &dh_n,
            grads,
        );
    }

    fn backward_vision_only(
        &self,
        _g: &GraphTensors<T>,
        cache: &ForwardCache<T>,
        dpreds: &Array1<T>,
        grads: &mut Grads<T>,
    ) {
        let rows = cache.vision_head_in.as_ref().unwrap();
        let k = rows.nrows();
        let vf = self.visual.as_ref().unwrap().feature_dim;
        let mut dout = Array2::zeros((k, 1));
        for i in 0..k {
            dout[[i, 0]] = dpreds[i];
        }
        let head = self.vision_head.as_ref().unwrap();
        let drows = head.backward(&self.store, cache.vision_head_cache.as_ref().unwrap(), &dout, grads);
        let mut dz = Array2::zeros((1, vf));
        for i in 0..k {
            for j in 0..vf {
                dz[[0, j]] = dz[[0, j]] + drows[[i, j]];
            }
        }
        self.visual
            .as_ref()
            .unwrap()
            .backward(&self.store, cache.visual.as_ref().unwrap(), &dz, grads);
    }

    /// Sum of squared errors against the graph targets plus gradient
    /// accumulation scaled by `inv_total_edges` (the batch 1/sum(K) factor).
    pub fn loss_and_grads(
        &self,
        g: &GraphTensors<T>,
        inv_total_edges: T,
        grads: &mut Grads<T>,
    ) -> Result<f64> {
        let targets = g
            .targets
            .as_ref()
            .ok_or_else(|| ModelError::InvalidConfig("graph has no training targets".into()))?;
        let cache = self.forward(g)?;
        let mut sse = T::zero();
        let mut dpreds = Array1::zeros(g.k());
        let two = sc::<T>(2.0);
        for i in 0..g.k() {
            let r = cache.preds[i] - targets[i];
            sse = sse + r * r;
            dpreds[i] = two * r * inv_total_edges;
        }
        self.backward(g, &cache, &dpreds, grads);
        Ok(to_f64(sse))
    }

    /// Forward-only loss (used by finite-difference verification).
    pub fn loss(&self, g: &GraphTensors<T>) -> Result<f64> {
        let targets = g
            .targets
            .as_ref()
            .ok_or_else(|| ModelError::InvalidConfig("graph has no training targets".into()))?;
        let cache = self.forward(g)?;
        let mut sse = T::zero();
        for i in 0..g.k() {
            let r = cache.preds[i] - targets[i];
            sse = sse + r * r;
        }
        Ok(to_f64(sse) / g.k() as f64)
    }

    /// Run a forward pass and extract softmax-closure diagnostics.
    pub fn diagnostics(&self, g: &GraphTensors<T>) -> Result<ModelDiagnostics> {
        let cache = self.forward(g)?;
        let mut attention_sums = Vec::new();
        let mut gate_triplet_sums = Vec::new();
        for lc in &cache.layer_caches {
            for seg in g.in_edges.iter().filter(|s| !s.is_empty()) {
                for h in 0..self.config.num_heads {
                    let mut s = T::zero();
                    for &e in seg {
                        s = s + lc.alpha[[e, h]];
                    }
                    attention_sums.push(to_f64(s));
                }
            }
            for e in 0..g.num_edges() {
                let s = lc.gate_coeff[[e, 0]] + lc.gate_coeff[[e, 1]] + lc.gate_coeff[[e, 2]];
                gate_triplet_sums.push(to_f64(s));
            }
        }
        let fusion_gates = cache
            .fusion
            .as_ref()
            .and_then(|fc| fc.w.as_ref())
            .map(|w| w.iter().map(|&v| to_f64(v)).collect())
            .unwrap_or_default();
        Ok(ModelDiagnostics {
            attention_sums,
            gate_triplet_sums,
            fusion_gates,
        })
    }

    /// Cast the whole model (used to lift f32 checkpoints to f64 for
    /// verification).
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            node_encoder: self.node_encoder.clone(),
            edge_encoder: self.edge_encoder.clone(),
            layers: self.layers.clone(),
            visual: self.visual.clone(),
            visual_proj: self.visual_proj.clone(),
            visual_ln: self.visual_ln.clone(),
            fusion: self.fusion.clone(),
            head: self.head.clone(),
            vision_head: self.vision_head.clone(),
        }
    }
}

/// Project one snapshot visual embedding onto every directed edge:
/// transmission edges receive the projected vector, correlation edges (and
/// disabled-visual configurations) receive zeros.
pub fn topology_aware_map<T: Scalar>(
    projected: Option<&Array2<T>>,
    g: &GraphTensors<T>,
    hidden_dim: usize,
) -> Array2<T> {
    let mut out = Array2::zeros((g.num_edges(), hidden_dim));
    if let Some(p) = projected {
        let k = g.k();
        // Forward and reverse transmission copies occupy the first 2K slots.
        for e in 0..2 * k {
            out.row_mut(e).assign(&p.row(0));
        }
    }
    out
}
