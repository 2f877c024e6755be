//! Named parameter store with grouped freezing, gradient buffers and the
//! AdamW optimizer.

use crate::scalar::{sc, Scalar};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameter grouping used for freezing and transfer strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    NodeEncoder,
    EdgeEncoder,
    Gnn,
    /// Visual backbone stage index (0-based); freeze_depth freezes leading stages.
    VisualBackbone(usize),
    VisualProj,
    FusionGate,
    Head,
}

impl ParamGroup {
    /// The head of the network retrained under the frozen-backbone transfer
    /// strategy: the regression head and the fusion gate.
    pub fn is_head(&self) -> bool {
        matches!(self, ParamGroup::Head | ParamGroup::FusionGate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub group: ParamGroup,
    pub data: Array2<T>,
}

/// All learnable tensors of a model, in construction order. Construction
/// order is deterministic for a fixed config, which fixes both
/// initialization draws and checkpoint layout.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Register a tensor initialized uniformly in ±sqrt(6 / (fan_in + fan_out)).
    pub fn add_xavier(
        &mut self,
        name: &str,
        group: ParamGroup,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = Array2::from_shape_fn((rows, cols), |_| sc(rng.random_range(-bound..bound)));
        self.add(name, group, data)
    }

    /// Register a tensor filled with a constant.
    pub fn add_const(&mut self, name: &str, group: ParamGroup, rows: usize, cols: usize, value: f64) -> ParamId {
        self.add(name, group, Array2::from_elem((rows, cols), sc(value)))
    }

    /// Register a bias initialized uniformly in ±1/sqrt(fan_in).
    pub fn add_bias(
        &mut self,
        name: &str,
        group: ParamGroup,
        dim: usize,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = Array2::from_shape_fn((1, dim), |_| sc(rng.random_range(-bound..bound)));
        self.add(name, group, data)
    }

    pub fn add(&mut self, name: &str, group: ParamGroup, data: Array2<T>) -> ParamId {
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            group,
            data,
        });
        id
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.entries[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.entries[id.0].data
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Convert every tensor to another scalar type (used to lift f32
    /// checkpoints into f64 for verification runs).
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    group: e.group,
                    data: e.data.mapv(|v| sc(crate::scalar::to_f64(v))),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient buffers matching a store's tensors one-to-one.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub tensors: Vec<Array2<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            tensors: store
                .entries()
                .iter()
                .map(|e| Array2::zeros(e.data.raw_dim()))
                .collect(),
        }
    }

    #[inline]
    pub fn acc(&mut self, id: ParamId, delta: &Array2<T>) {
        self.tensors[id.0] += delta;
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.tensors[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * factor);
        }
    }
}

/// AdamW with decoupled weight decay. Frozen parameters are skipped
/// entirely: no moment update and no decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(store: &ParamStore<T>, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store
                .entries()
                .iter()
                .map(|e| Array2::zeros(e.data.raw_dim()))
                .collect(),
            v: store
                .entries()
                .iter()
                .map(|e| Array2::zeros(e.data.raw_dim()))
                .collect(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>, trainable: &[bool]) {
        self.step += 1;
        let b1 = sc::<T>(self.beta1);
        let b2 = sc::<T>(self.beta2);
        let one = T::one();
        let bc1 = sc::<T>(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = sc::<T>(1.0 - self.beta2.powi(self.step as i32));
        let lr = sc::<T>(self.lr);
        let wd = sc::<T>(self.weight_decay);
        let eps = sc::<T>(self.eps);

        for (idx, entry) in store.entries_mut().iter_mut().enumerate() {
            if !trainable[idx] {
                continue;
            }
            let g = &grads.tensors[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            ndarray::Zip::from(&mut entry.data)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p - lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
                });
        }
    }
}
