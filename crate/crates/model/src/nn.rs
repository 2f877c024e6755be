//! Layer primitives with explicit forward/backward passes: linear, two-layer
//! MLP, layer normalization, 3x3 convolution (im2col), pooling and the
//! segment softmax used for per-node attention normalization.

use crate::params::{Grads, ParamGroup, ParamId, ParamStore};
use crate::scalar::{sc, Scalar};
use ndarray::{Array1, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

/// Fully connected layer; weight stored as (out, in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add_xavier(&format!("{name}.w"), group, out_dim, in_dim, in_dim, out_dim, rng);
        let b = store.add_bias(&format!("{name}.b"), group, out_dim, in_dim, rng);
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        x.dot(&store.get(self.w).t()) + store.get(self.b)
    }

    /// Returns dx and accumulates dW, db.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
        dy: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Array2<T> {
        grads.acc(self.w, &dy.t().dot(x));
        let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        grads.acc(self.b, &db);
        dy.dot(store.get(self.w))
    }
}

/// ReLU applied elementwise; returns output (backward masks by output > 0).
pub fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(y: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &o| {
        if o <= T::zero() {
            *d = T::zero();
        }
    });
    dx
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Two-layer feed-forward block: Linear -> ReLU -> Linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub x: Array2<T>,
    pub h: Array2<T>,
}

impl Mlp {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), group, in_dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), group, hidden, out_dim, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> (Array2<T>, MlpCache<T>) {
        let h = relu(&self.l1.forward(store, x));
        let y = self.l2.forward(store, &h);
        (
            y,
            MlpCache {
                x: x.clone(),
                h,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &MlpCache<T>,
        dy: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Array2<T> {
        let dh = self.l2.backward(store, &cache.h, dy, grads);
        let dh = relu_backward(&cache.h, &dh);
        self.l1.backward(store, &cache.x, &dh, grads)
    }
}

/// Layer normalization over the last axis with learned affine.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    pub x_hat: Array2<T>,
    pub inv_std: Array1<T>,
}

const LN_EPS: f64 = 1e-8;

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, group: ParamGroup, dim: usize) -> Self {
        let gamma = store.add_const(&format!("{name}.gamma"), group, 1, dim, 1.0);
        let beta = store.add_const(&format!("{name}.beta"), group, 1, dim, 0.0);
        Self { gamma, beta, dim }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
    ) -> (Array2<T>, LayerNormCache<T>) {
        let n = x.nrows();
        let d = sc::<T>(self.dim as f64);
        let mut x_hat = x.clone();
        let mut inv_std = Array1::zeros(n);
        for (mut row, s) in x_hat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b) / d;
            let istd = T::one() / (var + sc::<T>(LN_EPS)).sqrt();
            row.mapv_inplace(|v| v * istd);
            *s = istd;
        }
        let y = &x_hat * store.get(self.gamma) + store.get(self.beta);
        (y, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &LayerNormCache<T>,
        dy: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Array2<T> {
        let d = sc::<T>(self.dim as f64);
        grads.acc(self.gamma, &(dy * &cache.x_hat).sum_axis(Axis(0)).insert_axis(Axis(0)));
        grads.acc(self.beta, &dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let dx_hat = dy * store.get(self.gamma);
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dxh = dx_hat.row(i);
            let xh = cache.x_hat.row(i);
            let sum_dxh = dxh.sum();
            let sum_dxh_xh = dxh
                .iter()
                .zip(xh.iter())
                .map(|(&a, &b)| a * b)
                .fold(T::zero(), |a, b| a + b);
            let istd = cache.inv_std[i];
            for j in 0..self.dim {
                dx[[i, j]] = istd * (dxh[j] - sum_dxh / d - xh[j] * sum_dxh_xh / d);
            }
        }
        dx
    }
}

/// Softmax over variable-length index segments of a (rows x heads) logit
/// matrix; each (segment, head) pair normalizes independently.
pub fn segment_softmax<T: Scalar>(logits: &Array2<T>, segments: &[Vec<usize>]) -> Array2<T> {
    let heads = logits.ncols();
    let mut out = Array2::zeros(logits.raw_dim());
    for seg in segments {
        if seg.is_empty() {
            continue;
        }
        for h in 0..heads {
            let mut max = T::neg_infinity();
            for &e in seg {
                if logits[[e, h]] > max {
                    max = logits[[e, h]];
                }
            }
            let mut total = T::zero();
            for &e in seg {
                let v = (logits[[e, h]] - max).exp();
                out[[e, h]] = v;
                total = total + v;
            }
            for &e in seg {
                out[[e, h]] = out[[e, h]] / total;
            }
        }
    }
    out
}

/// Backward of segment softmax: dz = alpha * (dalpha - sum(alpha * dalpha)).
pub fn segment_softmax_backward<T: Scalar>(
    alpha: &Array2<T>,
    dalpha: &Array2<T>,
    segments: &[Vec<usize>],
) -> Array2<T> {
    let heads = alpha.ncols();
    let mut dz = Array2::zeros(alpha.raw_dim());
    for seg in segments {
        for h in 0..heads {
            let mut dot = T::zero();
            for &e in seg {
                dot = dot + alpha[[e, h]] * dalpha[[e, h]];
            }
            for &e in seg {
                dz[[e, h]] = alpha[[e, h]] * (dalpha[[e, h]] - dot);
            }
        }
    }
    dz
}

/// Row-wise softmax over a small fixed number of columns.
pub fn row_softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

pub fn row_softmax_backward<T: Scalar>(alpha: &Array2<T>, dalpha: &Array2<T>) -> Array2<T> {
    let mut dz = Array2::zeros(alpha.raw_dim());
    for i in 0..alpha.nrows() {
        let mut dot = T::zero();
        for j in 0..alpha.ncols() {
            dot = dot + alpha[[i, j]] * dalpha[[i, j]];
        }
        for j in 0..alpha.ncols() {
            dz[[i, j]] = alpha[[i, j]] * (dalpha[[i, j]] - dot);
        }
    }
    dz
}

/// 3x3 convolution, stride 1, zero padding 1, implemented via im2col.
/// Weight layout: (out_ch, in_ch * 9).
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv3x3 {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        in_ch: usize,
        out_ch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * 9;
        let w = store.add_xavier(&format!("{name}.w"), group, out_ch, fan_in, fan_in, out_ch, rng);
        let b = store.add_bias(&format!("{name}.b"), group, out_ch, fan_in, rng);
        Self {
            w,
            b,
            in_ch,
            out_ch,
        }
    }

    pub fn im2col<T: Scalar>(x: &Array3<T>) -> Array2<T> {
        let (c, h, w) = x.dim();
        let mut cols = Array2::zeros((h * w, c * 9));
        for y in 0..h {
            for xx in 0..w {
                let row = y * w + xx;
                for ch in 0..c {
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let sy = y as i64 + ky as i64 - 1;
                            let sx = xx as i64 + kx as i64 - 1;
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                cols[[row, ch * 9 + ky * 3 + kx]] = x[[ch, sy as usize, sx as usize]];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(dcols: &Array2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
        let mut dx = Array3::zeros((c, h, w));
        for y in 0..h {
            for xx in 0..w {
                let row = y * w + xx;
                for ch in 0..c {
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let sy = y as i64 + ky as i64 - 1;
                            let sx = xx as i64 + kx as i64 - 1;
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                dx[[ch, sy as usize, sx as usize]] =
                                    dx[[ch, sy as usize, sx as usize]] + dcols[[row, ch * 9 + ky * 3 + kx]];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Forward pass; returns (out (out_ch,H,W), cols cache).
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array3<T>) -> (Array3<T>, Array2<T>) {
        let (_, h, w) = x.dim();
        let cols = Self::im2col(x);
        let out_mat = cols.dot(&store.get(self.w).t()) + store.get(self.b);
        let mut out = Array3::zeros((self.out_ch, h, w));
        for ch in 0..self.out_ch {
            for y in 0..h {
                for xx in 0..w {
                    out[[ch, y, xx]] = out_mat[[y * w + xx, ch]];
                }
            }
        }
        (out, cols)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cols: &Array2<T>,
        dy: &Array3<T>,
        grads: &mut Grads<T>,
    ) -> Array3<T> {
        let (_, h, w) = dy.dim();
        let mut dy_mat = Array2::zeros((h * w, self.out_ch));
        for ch in 0..self.out_ch {
            for y in 0..h {
                for xx in 0..w {
                    dy_mat[[y * w + xx, ch]] = dy[[ch, y, xx]];
                }
            }
        }
        grads.acc(self.w, &dy_mat.t().dot(cols));
        grads.acc(self.b, &dy_mat.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let dcols = dy_mat.dot(store.get(self.w));
        Self::col2im(&dcols, self.in_ch, h, w)
    }
}

/// 2x2 average pooling with stride 2 (even input sizes only).
pub fn avg_pool2<T: Scalar>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let quarter = sc::<T>(0.25);
    let mut out = Array3::zeros((c, h / 2, w / 2));
    for ch in 0..c {
        for y in 0..h / 2 {
            for xx in 0..w / 2 {
                let s = x[[ch, 2 * y, 2 * xx]]
                    + x[[ch, 2 * y, 2 * xx + 1]]
                    + x[[ch, 2 * y + 1, 2 * xx]]
                    + x[[ch, 2 * y + 1, 2 * xx + 1]];
                out[[ch, y, xx]] = s * quarter;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Scalar>(dy: &Array3<T>, in_h: usize, in_w: usize) -> Array3<T> {
    let (c, h, w) = dy.dim();
    let quarter = sc::<T>(0.25);
    let mut dx = Array3::zeros((c, in_h, in_w));
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let g = dy[[ch, y, xx]] * quarter;
                dx[[ch, 2 * y, 2 * xx]] = g;
                dx[[ch, 2 * y, 2 * xx + 1]] = g;
                dx[[ch, 2 * y + 1, 2 * xx]] = g;
                dx[[ch, 2 * y + 1, 2 * xx + 1]] = g;
            }
        }
    }
    dx
}

/// Global average pooling (C,H,W) -> (1,C).
pub fn global_avg_pool<T: Scalar>(x: &Array3<T>) -> Array2<T> {
    let (c, h, w) = x.dim();
    let scale = sc::<T>(1.0 / (h * w) as f64);
    let mut out = Array2::zeros((1, c));
    for ch in 0..c {
        let mut acc = T::zero();
        for y in 0..h {
            for xx in 0..w {
                acc = acc + x[[ch, y, xx]];
            }
        }
        out[[0, ch]] = acc * scale;
    }
    out
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &Array2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
    let scale = sc::<T>(1.0 / (h * w) as f64);
    let mut dx = Array3::zeros((c, h, w));
    for ch in 0..c {
        let g = dy[[0, ch]] * scale;
        for y in 0..h {
            for xx in 0..w {
                dx[[ch, y, xx]] = g;
            }
        }
    }
    dx
}

/// ReLU over a 3D activation map.
pub fn relu3<T: Scalar>(x: &Array3<T>) -> Array3<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu3_backward<T: Scalar>(y: &Array3<T>, dy: &Array3<T>) -> Array3<T> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &o| {
        if o <= T::zero() {
            *d = T::zero();
        }
    });
    dx
}
