//! Softmax classifiers over flat parameter vectors.
//!
//! Logistic regression stores `W (classes × features)` then `b`. The MLP
//! stores `W1 (hidden × features)`, `b1`, `W2 (classes × hidden)`, `b2` and
//! uses a tanh hidden layer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Logistic,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    arch: Architecture,
    features: usize,
    classes: usize,
}

/// Global model `w^i` at epoch `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub model: Model,
    pub w: Vec<f64>,
    pub epoch: u64,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &w[k * cols..(k + 1) * cols];
        *o = b[k] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

impl Model {
    pub fn new(arch: Architecture, features: usize, classes: usize) -> Result<Self> {
        if features == 0 || classes < 2 || matches!(arch, Architecture::Mlp { hidden: 0 }) {
            return Err(Error::Config(format!(
                "model {arch:?} with {features} features and {classes} classes"
            )));
        }
        Ok(Self { arch, features, classes })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn param_count(&self) -> usize {
        match self.arch {
            Architecture::Logistic => self.classes * (self.features + 1),
            Architecture::Mlp { hidden } => hidden * (self.features + 1) + self.classes * (hidden + 1),
        }
    }

    /// Length of the input-layer weight block at the front of the vector.
    pub fn first_layer_len(&self) -> usize {
        match self.arch {
            Architecture::Logistic => self.classes * self.features,
            Architecture::Mlp { hidden } => hidden * self.features,
        }
    }

    /// Zeros for logistic regression; Glorot-uniform weights and zero biases
    /// for the MLP.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut w = vec![0.0; self.param_count()];
        if let Architecture::Mlp { hidden } = self.arch {
            let (f, c) = (self.features, self.classes);
            let a1 = (6.0 / (f + hidden) as f64).sqrt();
            for v in &mut w[..hidden * f] {
                *v = rng.random_range(-a1..a1);
            }
            let start = hidden * (f + 1);
            let a2 = (6.0 / (hidden + c) as f64).sqrt();
            for v in &mut w[start..start + c * hidden] {
                *v = rng.random_range(-a2..a2);
            }
        }
        w
    }

    fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities; `hidden` receives the tanh activations.
    fn forward(&self, w: &[f64], x: &[f64], hidden_out: &mut Vec<f64>) -> Vec<f64> {
        let (f, c) = (self.features, self.classes);
        let mut z = vec![0.0; c];
        match self.arch {
            Architecture::Logistic => affine(&w[..c * f], &w[c * f..], x, &mut z),
            Architecture::Mlp { hidden } => {
                hidden_out.resize(hidden, 0.0);
                affine(&w[..hidden * f], &w[hidden * f..hidden * (f + 1)], x, hidden_out);
                for h in hidden_out.iter_mut() {
                    *h = h.tanh();
                }
                let o = hidden * (f + 1);
                affine(&w[o..o + c * hidden], &w[o + c * hidden..], hidden_out, &mut z);
            }
        }
        softmax_in_place(&mut z);
        z
    }

    pub fn probabilities(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(w, x, &mut Vec::new())
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let p = self.probabilities(w, x);
        (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }

    /// Mean cross-entropy over the rows `idx` and its gradient.
    pub fn loss_grad(&self, w: &[f64], data: &Dataset, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check(w)?;
        if data.features() != self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                actual: data.features(),
            });
        }
        let (f, c) = (self.features, self.classes);
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        let mut h = Vec::new();
        let mut dh = Vec::new();
        for &i in idx {
            let x = data.row(i);
            let label = data.label(i);
            let mut dz = self.forward(w, x, &mut h);
            loss -= dz[label].max(f64::MIN_POSITIVE).ln();
            dz[label] -= 1.0;
            match self.arch {
                Architecture::Logistic => {
                    for k in 0..c {
                        let row = &mut grad[k * f..(k + 1) * f];
                        for (g, xj) in row.iter_mut().zip(x) {
                            *g += dz[k] * xj;
                        }
                        grad[c * f + k] += dz[k];
                    }
                }
                Architecture::Mlp { hidden } => {
                    let o = hidden * (f + 1);
                    dh.clear();
                    dh.resize(hidden, 0.0);
                    for k in 0..c {
                        let w2 = &w[o + k * hidden..o + (k + 1) * hidden];
                        let g2 = &mut grad[o + k * hidden..o + (k + 1) * hidden];
                        for j in 0..hidden {
                            g2[j] += dz[k] * h[j];
                            dh[j] += dz[k] * w2[j];
                        }
                        grad[o + c * hidden + k] += dz[k];
                    }
                    for j in 0..hidden {
                        let da = dh[j] * (1.0 - h[j] * h[j]);
                        let row = &mut grad[j * f..(j + 1) * f];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += da * xi;
                        }
                        grad[hidden * f + j] += da;
                    }
                }
            }
        }
        let n = idx.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    pub fn loss(&self, w: &[f64], data: &Dataset, idx: &[usize]) -> Result<f64> {
        Ok(self.loss_grad(w, data, idx)?.0)
    }

    /// Overall and per-class accuracy.
    pub fn evaluate(&self, w: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
        let mut hits = vec![0usize; self.classes];
        let mut counts = vec![0usize; self.classes];
        for i in 0..data.len() {
            let y = data.label(i);
            counts[y] += 1;
            if self.predict(w, data.row(i)) == y {
                hits[y] += 1;
            }
        }
        let total = hits.iter().sum::<usize>() as f64 / data.len().max(1) as f64;
        let per_class = hits
            .iter()
            .zip(&counts)
            .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
            .collect();
        (total, per_class)
    }
}

/// Mini-batch SGD from `w`; returns the effective gradient
/// `(w_start - w_end) / η`. Rows are reshuffled every epoch.
pub fn local_train<R: Rng + ?Sized>(
    model: &Model,
    w: &[f64],
    shard: &Dataset,
    eta: f64,
    epochs: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if shard.is_empty() || batch == 0 {
        return Err(Error::InvalidInput("empty shard or zero batch size".into()));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidInput(format!("learning rate {eta}")));
    }
    if eta == 0.0 || epochs == 0 {
        return Ok(vec![0.0; w.len()]);
    }
    let mut cur = w.to_vec();
    let mut idx: Vec<usize> = (0..shard.len()).collect();
    for epoch in 0..epochs {
        if batch < shard.len() {
            idx.shuffle(rng);
        }
        for chunk in idx.chunks(batch) {
            let (loss, g) = model.loss_grad(&cur, shard, chunk)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss {loss} in local epoch {epoch}")));
            }
            for (c, gi) in cur.iter_mut().zip(&g) {
                *c -= eta * gi;
            }
        }
    }
    let out: Vec<f64> = w.iter().zip(&cur).map(|(a, b)| (a - b) / eta).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("non-finite parameters after local training".into()));
    }
    Ok(out)
}
