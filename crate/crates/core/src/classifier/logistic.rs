use serde::{Deserialize, Serialize};

use crate::embedding::dot_f64;

const PRIOR_CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Trained,
    /// Single-class training data: fixed probability from the clipped prior.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: HeadKind,
}

impl LogisticHead {
    pub fn constant(dim: usize, prior: f64) -> Self {
        let p = prior.clamp(PRIOR_CLIP.0, PRIOR_CLIP.1);
        Self { weights: vec![0.0; dim], bias: (p / (1.0 - p)).ln(), kind: HeadKind::Constant }
    }

    /// Probability of the positive class for an already-normalized row.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(dot_f64(&self.weights, x) + self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub head: LogisticHead,
    pub final_loss: f64,
    /// Loss before the first step and after each epoch.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy plus `(lambda/2)|w|^2`, with its gradient in `w` and `b`.
pub fn logistic_loss_and_grad(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z = dot_f64(w, row) + b;
        let t = if yi { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    (loss / n + 0.5 * lambda * reg, gw, gb / n)
}

/// Full-batch gradient descent from zero. Rows of `x` should be unit length.
/// Degenerate inputs (no rows, or one class only) yield a constant head.
pub fn train_logistic(x: &[Vec<f64>], y: &[bool], dim: usize, learning_rate: f64, epochs: usize, lambda: f64) -> LogisticFit {
    assert_eq!(x.len(), y.len(), "one label per row");
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        let prior = if y.is_empty() { 0.5 } else { positives as f64 / y.len() as f64 };
        let head = LogisticHead::constant(dim, prior);
        let (loss, _, _) = logistic_loss_and_grad(x, y, &head.weights, head.bias, lambda);
        let loss = if y.is_empty() { 0.0 } else { loss };
        return LogisticFit { head, final_loss: loss, loss_history: vec![loss] };
    }
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(epochs + 1);
    let (mut loss, mut gw, mut gb) = logistic_loss_and_grad(x, y, &w, b, lambda);
    history.push(loss);
    for _ in 0..epochs {
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= learning_rate * g;
        }
        b -= learning_rate * gb;
        (loss, gw, gb) = logistic_loss_and_grad(x, y, &w, b, lambda);
        history.push(loss);
    }
    LogisticFit { head: LogisticHead { weights: w, bias: b, kind: HeadKind::Trained }, final_loss: loss, loss_history: history }
}
