//! Differentiable objectives on flat parameter vectors.
//!
//! A model exposes mean loss and its analytic gradient over a minibatch of
//! dataset rows. Gradients are verified against central finite differences
//! in the test and verify suites. Three concrete objectives:
//!
//! - [`QuadraticModel`]: `½‖Ax - b‖² / n` least squares on regression rows.
//! - [`LogisticModel`]: multinomial cross-entropy with linear scores and
//!   optional L2 on the weight matrix (biases excluded).
//! - [`MlpModel`]: one tanh hidden layer and softmax cross-entropy. tanh is
//!   smooth everywhere, keeping the objective compatible with smoothness
//!   assumptions; no ReLU here.
//!
//! `loss` and `grad` are pure: identical inputs give bit-identical outputs.
//! Dimension mismatches are contract violations and panic; divergence
//! (non-finite values) is detected by the training loops upstream.

use rand::Rng;

use crate::data::Dataset;
use crate::linalg;
use crate::seed;

/// A differentiable objective over flat `Vec<f64>` parameters.
pub trait ObjectiveModel: Sync {
    /// Parameter count d.
    fn dim(&self) -> usize;

    /// Mean loss over the batch rows.
    fn loss(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> f64;

    /// Analytic gradient of the batch-mean loss.
    fn grad(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64>;

    /// Deterministic initial parameters.
    fn init_params(&self, seed: u64) -> Vec<f64>;

    /// Predicted class for one row; `None` for non-classification models.
    /// Ties break toward the lowest class index.
    fn predict(&self, _params: &[f64], _data: &Dataset, _idx: usize) -> Option<usize> {
        None
    }
}

/// Central finite differences per coordinate: `(loss(θ+he_j) - loss(θ-he_j)) / 2h`.
/// An implementation-independent oracle for `grad`.
pub fn finite_diff_grad(
    model: &dyn ObjectiveModel,
    params: &[f64],
    data: &Dataset,
    batch: &[usize],
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step h must be positive");
    let mut theta = params.to_vec();
    let mut out = vec![0.0; params.len()];
    for j in 0..params.len() {
        let orig = theta[j];
        theta[j] = orig + h;
        let plus = model.loss(&theta, data, batch);
        theta[j] = orig - h;
        let minus = model.loss(&theta, data, batch);
        theta[j] = orig;
        out[j] = (plus - minus) / (2.0 * h);
    }
    out
}

// ---------------------------------------------------------------------------
// Quadratic least squares
// ---------------------------------------------------------------------------

/// `½‖Ax - b‖² / n_batch` over regression rows.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub dim: usize,
}

impl ObjectiveModel for QuadraticModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        assert_eq!(params.len(), self.dim, "parameter dimension mismatch");
        assert_eq!(data.dim(), self.dim, "data dimension mismatch");
        let mut acc = 0.0;
        for &i in batch {
            let r = linalg::dot(data.row(i), params) - data.target(i);
            acc += 0.5 * r * r;
        }
        acc / batch.len() as f64
    }

    fn grad(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64> {
        assert_eq!(params.len(), self.dim, "parameter dimension mismatch");
        let mut out = vec![0.0; self.dim];
        for &i in batch {
            let r = linalg::dot(data.row(i), params) - data.target(i);
            linalg::axpy(r, data.row(i), &mut out);
        }
        let inv = 1.0 / batch.len() as f64;
        for v in &mut out {
            *v *= inv;
        }
        out
    }

    fn init_params(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

/// Linear scores with softmax cross-entropy. Parameters are the row-major
/// `C x d` weight matrix followed by `C` biases. The optional L2 penalty
/// applies to the weight matrix only.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub input_dim: usize,
    pub num_classes: usize,
    pub l2: f64,
}

impl LogisticModel {
    fn scores(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, c) = (self.input_dim, self.num_classes);
        (0..c)
            .map(|j| linalg::dot(&params[j * d..(j + 1) * d], x) + params[c * d + j])
            .collect()
    }
}

/// `log(sum_j exp(s_j))`, stabilized by the max score.
fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn argmax_lowest_tie(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

impl ObjectiveModel for LogisticModel {
    fn dim(&self) -> usize {
        self.num_classes * self.input_dim + self.num_classes
    }

    fn loss(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        assert_eq!(params.len(), self.dim(), "parameter dimension mismatch");
        let mut acc = 0.0;
        for &i in batch {
            let s = self.scores(params, data.row(i));
            acc += log_sum_exp(&s) - s[data.label(i) as usize];
        }
        let mut loss = acc / batch.len() as f64;
        if self.l2 > 0.0 {
            let w = &params[..self.num_classes * self.input_dim];
            loss += 0.5 * self.l2 * linalg::norm_sq(w);
        }
        loss
    }

    fn grad(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64> {
        assert_eq!(params.len(), self.dim(), "parameter dimension mismatch");
        let (d, c) = (self.input_dim, self.num_classes);
        let mut out = vec![0.0; self.dim()];
        let inv = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = data.row(i);
            let mut p = softmax(&self.scores(params, x));
            p[data.label(i) as usize] -= 1.0;
            for (j, pj) in p.iter().enumerate() {
                linalg::axpy(pj * inv, x, &mut out[j * d..(j + 1) * d]);
                out[c * d + j] += pj * inv;
            }
        }
        if self.l2 > 0.0 {
            for (o, w) in out[..c * d].iter_mut().zip(&params[..c * d]) {
                *o += self.l2 * w;
            }
        }
        out
    }

    /// Zero init: makes the uniform-softmax `ln C` loss identity exact.
    fn init_params(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn predict(&self, params: &[f64], data: &Dataset, idx: usize) -> Option<usize> {
        Some(argmax_lowest_tie(&self.scores(params, data.row(idx))))
    }
}

// ---------------------------------------------------------------------------
// One-hidden-layer MLP
// ---------------------------------------------------------------------------

/// tanh hidden layer, softmax cross-entropy output. Parameter layout:
/// `W1 (h x d)`, `b1 (h)`, `W2 (C x h)`, `b2 (C)`, all row-major.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl MlpModel {
    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (d, h, c) = (self.input_dim, self.hidden, self.num_classes);
        let w1 = &params[..h * d];
        let b1 = &params[h * d..h * d + h];
        let w2 = &params[h * d + h..h * d + h + c * h];
        let b2 = &params[h * d + h + c * h..];
        (w1, b1, w2, b2)
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h, c) = (self.input_dim, self.hidden, self.num_classes);
        let (w1, b1, w2, b2) = self.split(params);
        let hidden: Vec<f64> = (0..h)
            .map(|u| (linalg::dot(&w1[u * d..(u + 1) * d], x) + b1[u]).tanh())
            .collect();
        let scores: Vec<f64> = (0..c)
            .map(|j| linalg::dot(&w2[j * h..(j + 1) * h], &hidden) + b2[j])
            .collect();
        (hidden, scores)
    }
}

impl ObjectiveModel for MlpModel {
    fn dim(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden, self.num_classes);
        h * d + h + c * h + c
    }

    fn loss(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        assert_eq!(params.len(), self.dim(), "parameter dimension mismatch");
        let mut acc = 0.0;
        for &i in batch {
            let (_, s) = self.forward(params, data.row(i));
            acc += log_sum_exp(&s) - s[data.label(i) as usize];
        }
        acc / batch.len() as f64
    }

    fn grad(&self, params: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64> {
        assert_eq!(params.len(), self.dim(), "parameter dimension mismatch");
        let (d, h, c) = (self.input_dim, self.hidden, self.num_classes);
        let (_, _, w2, _) = self.split(params);
        let mut out = vec![0.0; self.dim()];
        let inv = 1.0 / batch.len() as f64;
        let (g_w1_end, g_b1_end, g_w2_end) = (h * d, h * d + h, h * d + h + c * h);
        for &i in batch {
            let x = data.row(i);
            let (hidden, scores) = self.forward(params, x);
            let mut delta = softmax(&scores);
            delta[data.label(i) as usize] -= 1.0;
            // Output layer.
            for (j, dj) in delta.iter().enumerate() {
                linalg::axpy(
                    dj * inv,
                    &hidden,
                    &mut out[g_b1_end + j * h..g_b1_end + (j + 1) * h],
                );
                out[g_w2_end + j] += dj * inv;
            }
            // Backprop through tanh.
            for u in 0..h {
                let upstream: f64 = (0..c).map(|j| delta[j] * w2[j * h + u]).sum();
                let dz = upstream * (1.0 - hidden[u] * hidden[u]);
                linalg::axpy(dz * inv, x, &mut out[u * d..(u + 1) * d]);
                out[g_w1_end + u] += dz * inv;
            }
        }
        out
    }

    /// Xavier-uniform weights `±sqrt(6/(fan_in+fan_out))`, zero biases.
    fn init_params(&self, seed: u64) -> Vec<f64> {
        let (d, h, c) = (self.input_dim, self.hidden, self.num_classes);
        let mut rng = seed::stream(seed::mix(&[seed, 0x6d6c_7000]));
        let mut params = vec![0.0; self.dim()];
        let bound1 = (6.0 / (d + h) as f64).sqrt();
        for v in params[..h * d].iter_mut() {
            *v = rng.random_range(-bound1..bound1);
        }
        let bound2 = (6.0 / (h + c) as f64).sqrt();
        for v in params[h * d + h..h * d + h + c * h].iter_mut() {
            *v = rng.random_range(-bound2..bound2);
        }
        params
    }

    fn predict(&self, params: &[f64], data: &Dataset, idx: usize) -> Option<usize> {
        let (_, s) = self.forward(params, data.row(idx));
        Some(argmax_lowest_tie(&s))
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
