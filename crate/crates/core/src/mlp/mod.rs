//! Two-layer bias-free MLP (784 -> 32 -> 10, ReLU) trained by mini-batch SGD
//! on softmax cross-entropy.

pub mod mnist;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mnist::{filter_labels, load_mnist, partition_exclude, DataPartition, Dataset, Mnist};

pub const INPUT: usize = mnist::PIXELS;
pub const HIDDEN: usize = 32;
pub const OUTPUT: usize = mnist::CLASSES;
/// Length of the flattened weight vector.
pub const PARAM_COUNT: usize = HIDDEN * INPUT + OUTPUT * HIDDEN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    /// HIDDEN × INPUT
    pub w1: Array2<f64>,
    /// OUTPUT × HIDDEN
    pub w2: Array2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Clamp every weight into `[-1, 1]` after each step.
    pub clamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.1, batch: 64, epochs: 1, clamp: true }
    }
}

/// Per-layer gradients plus the mean loss they were taken at.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub loss: f64,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl ModelWeights {
    pub fn zeros() -> Self {
        ModelWeights { w1: Array2::zeros((HIDDEN, INPUT)), w2: Array2::zeros((OUTPUT, HIDDEN)) }
    }

    /// He-uniform: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, inside `[-1, 1]` for both layers.
    pub fn he_uniform<R: Rng>(rng: &mut R) -> Self {
        let mut init = |rows: usize, cols: usize| {
            let lim = (6.0 / cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-lim..lim))
        };
        let w1 = init(HIDDEN, INPUT);
        let w2 = init(OUTPUT, HIDDEN);
        ModelWeights { w1, w2 }
    }

    /// W1 row-major, then W2 row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.w1.iter().chain(self.w2.iter()).copied().collect()
    }

    pub fn unflatten(v: &[f64]) -> Result<Self> {
        if v.len() != PARAM_COUNT {
            return Err(Error::Length { expected: PARAM_COUNT, actual: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite weight".into()));
        }
        let split = HIDDEN * INPUT;
        let w1 = Array2::from_shape_vec((HIDDEN, INPUT), v[..split].to_vec()).expect("shape checked");
        let w2 = Array2::from_shape_vec((OUTPUT, HIDDEN), v[split..].to_vec()).expect("shape checked");
        Ok(ModelWeights { w1, w2 })
    }

    /// Rounds every weight to the nearest f32, the precision used on the wire.
    pub fn round_to_f32(&mut self) {
        self.w1.mapv_inplace(|x| x as f32 as f64);
        self.w2.mapv_inplace(|x| x as f32 as f64);
    }

    /// Hidden pre-activations and logits for a `B × 784` batch.
    fn forward_full(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w1.t());
        let hidden = pre.mapv(|v| v.max(0.0));
        let logits = hidden.dot(&self.w2.t());
        (pre, hidden, logits)
    }

    /// `W2 relu(W1 x)` for each row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_full(x).2
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, labels: &[u8]) -> Gradients {
        let b = x.nrows();
        let (pre, hidden, logits) = self.forward_full(x);
        let mut dz = logits;
        let mut loss = 0.0;
        for (mut row, &y) in dz.rows_mut().into_iter().zip(labels) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
            loss -= row[y as usize].ln();
            row[y as usize] -= 1.0;
        }
        dz /= b as f64;
        let g2 = dz.t().dot(&hidden);
        let mut dh = dz.dot(&self.w2);
        dh.zip_mut_with(&pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        let g1 = dh.t().dot(&x);
        Gradients { loss: loss / b as f64, w1: g1, w2: g2 }
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[u8]) -> f64 {
        let logits = self.forward(x);
        let mut loss = 0.0;
        for (row, &y) in logits.rows().into_iter().zip(labels) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = row.mapv(|v| (v - max).exp()).sum().ln() + max;
            loss += lse - row[y as usize];
        }
        loss / x.nrows() as f64
    }

    pub fn sgd_step(&mut self, g: &Gradients, lr: f64, clamp: bool) {
        self.w1.scaled_add(-lr, &g.w1);
        self.w2.scaled_add(-lr, &g.w2);
        if clamp {
            self.w1.mapv_inplace(|v| v.clamp(-1.0, 1.0));
            self.w2.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        }
    }

    /// Plain-model file: magic `FLMW`, rows/cols of both layers (u32 LE), then f64 LE values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * PARAM_COUNT);
        out.extend_from_slice(b"FLMW");
        for d in [HIDDEN, INPUT, OUTPUT, HIDDEN] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 20 + 8 * PARAM_COUNT || &bytes[..4] != b"FLMW" {
            return Err(Error::Format("not a model file".into()));
        }
        let dims: Vec<u32> = bytes[4..20].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        if dims != [HIDDEN as u32, INPUT as u32, OUTPUT as u32, HIDDEN as u32] {
            return Err(Error::Format(format!("unexpected model shape {dims:?}")));
        }
        let v: Vec<f64> = bytes[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::unflatten(&v)
    }

    /// Text export: `{"w1": [[...]], "w2": [[...]]}`.
    pub fn to_json(&self) -> String {
        let rows = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        serde_json::json!({ "w1": rows(&self.w1), "w2": rows(&self.w2) }).to_string()
    }
}

/// Mini-batch SGD over `part`, reshuffled each epoch. Returns the per-epoch mean loss.
pub fn train_epochs<R: Rng>(
    w: &mut ModelWeights,
    part: &DataPartition,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if part.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order = part.indices.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let x = part.data.batch(chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| part.data.label(i)).collect();
            let g = w.loss_and_grad(x.view(), &labels);
            total += g.loss * chunk.len() as f64;
            w.sgd_step(&g, cfg.lr, cfg.clamp);
        }
        losses.push(total / order.len() as f64);
    }
    Ok(losses)
}

/// Top-1 accuracy over `part`.
pub fn evaluate(w: &ModelWeights, part: &DataPartition) -> Result<f64> {
    if part.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let mut correct = 0usize;
    for chunk in part.indices.chunks(1000) {
        let logits = w.forward(part.data.batch(chunk).view());
        for (row, &i) in logits.axis_iter(Axis(0)).zip(chunk) {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| if v > bv { (j, v) } else { (bi, bv) })
                .0;
            correct += (pred == part.data.label(i) as usize) as usize;
        }
    }
    Ok(correct as f64 / part.len() as f64)
}

/// Loss-gradient check helper: central difference of the batch loss along one coordinate.
pub fn finite_difference(w: &ModelWeights, x: ArrayView2<f64>, labels: &[u8], layer: usize, r: usize, c: usize, eps: f64) -> f64 {
    let mut plus = w.clone();
    let mut minus = w.clone();
    let (p, m) = match layer {
        1 => (&mut plus.w1[[r, c]], &mut minus.w1[[r, c]]),
        _ => (&mut plus.w2[[r, c]], &mut minus.w2[[r, c]]),
    };
    *p += eps;
    *m -= eps;
    (plus.loss(x, labels) - minus.loss(x, labels)) / (2.0 * eps)
}
