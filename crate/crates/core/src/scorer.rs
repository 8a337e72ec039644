//! Linear probabilistic scorer `f(x) = sigmoid(w·x + b)`, fit by full-batch
//! gradient descent on the logistic log-likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEARNING_RATE: f64 = 0.1;
pub const MAX_ITERATIONS: usize = 5000;
/// Gradient ∞-norm below which descent stops.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Weight norms below this make recourse directions meaningless.
pub const MIN_WEIGHT_NORM: f64 = 1e-6;
/// Label resampling attempts after a degenerate fit.
pub const MAX_REFITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; defined on the open interval `(0, 1)`.
pub fn logit(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Recourse(format!("logit undefined for score {s}; expected 0 < s < 1")));
    }
    Ok((s / (1.0 - s)).ln())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearScorer {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        LinearScorer { weights, bias }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The pre-sigmoid value `w·x + b`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        dot(&self.weights, x) + self.bias
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn weight_norm_sq(&self) -> f64 {
        dot(&self.weights, &self.weights)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weight_norm_sq().sqrt()
    }

    /// `{"weights": [...], "bias": ...}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scorer serializes")
    }
}

/// Mean negative log-likelihood of `labels` under `scorer`.
pub fn negative_log_likelihood(scorer: &LinearScorer, features: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = features.len() as f64;
    features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = scorer.margin(x);
            // log(1 + e^z) - y z, computed without overflow
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - f64::from(y) * z
        })
        .sum::<f64>()
        / n
}

fn gradient_descent(features: &[Vec<f64>], labels: &[u8], dim: usize) -> LinearScorer {
    let n = features.len() as f64;
    let mut scorer = LinearScorer::new(vec![0.0; dim], 0.0);
    let mut grad_w = vec![0.0; dim];
    for _ in 0..MAX_ITERATIONS {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let err = scorer.score(x) - f64::from(y);
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g += err * xi;
            }
            grad_b += err;
        }
        grad_w.iter_mut().for_each(|g| *g /= n);
        grad_b /= n;

        let inf_norm = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        if inf_norm < GRADIENT_TOLERANCE {
            break;
        }
        for (w, g) in scorer.weights.iter_mut().zip(&grad_w) {
            *w -= LEARNING_RATE * g;
        }
        scorer.bias -= LEARNING_RATE * grad_b;
    }
    scorer
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

/// Fits a logistic scorer to `features` and binary `labels`.
///
/// A fit whose weight norm falls below [`MIN_WEIGHT_NORM`] is retried with
/// labels redrawn from `Bernoulli(label_prob)` using `rng`, at most
/// [`MAX_REFITS`] times.
pub fn train<R: Rng + ?Sized>(
    features: &[Vec<f64>],
    labels: &[u8],
    label_prob: f64,
    rng: &mut R,
) -> Result<LinearScorer> {
    if features.len() < 2 {
        return Err(Error::Training(format!("need at least 2 samples, got {}", features.len())));
    }
    if features.len() != labels.len() {
        return Err(Error::Training(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|x| x.len() != dim) {
        return Err(Error::Training("feature rows must share a non-zero dimension".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Training("labels must be 0 or 1".into()));
    }
    if !has_both_classes(labels) {
        return Err(Error::Training("labels contain a single class".into()));
    }

    let mut labels = labels.to_vec();
    let mut refits = 0;
    loop {
        if has_both_classes(&labels) {
            let scorer = gradient_descent(features, &labels, dim);
            if scorer.weight_norm() >= MIN_WEIGHT_NORM {
                return Ok(scorer);
            }
        }
        if refits == MAX_REFITS {
            return Err(Error::Training(format!(
                "no non-degenerate fit after {MAX_REFITS} label resamples"
            )));
        }
        refits += 1;
        labels = (0..features.len())
            .map(|_| u8::from(rng.random_bool(label_prob)))
            .collect();
    }
}
