//! Agent action model: whether an agent acts on its recommendation (effort)
//! and how closely the resulting features follow it (adaptation).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{AdaptationMode, EffortMode};
use crate::scorer::LinearScorer;

/// Draws of the truncated step factor before giving up and using 0.
pub const MAX_GAMMA_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorOutcome {
    pub new_features: Vec<f64>,
    pub acted: bool,
    /// Realized step fraction; only drawn in continuous mode.
    pub gamma: Option<f64>,
    /// `f(x'') - f(x)`, filled in by [`BehaviorOutcome::with_delta`].
    pub delta_score: f64,
}

impl BehaviorOutcome {
    pub fn with_delta(mut self, scorer: &LinearScorer, old: &[f64]) -> Self {
        self.delta_score = if self.acted {
            scorer.score(&self.new_features) - scorer.score(old)
        } else {
            0.0
        };
        self
    }

    /// Whether the features actually moved.
    pub fn moved(&self, old: &[f64]) -> bool {
        self.new_features.as_slice() != old
    }
}

/// Willingness assigned when an agent enters.
///
/// Constant effort with continuous adaptation draws `l ~ U(0, 1)`. Constant
/// effort with binary adaptation stores `g`: the agent then acts each step
/// with probability `g`. Flexible effort stores 1 as a placeholder; the value
/// is recomputed every step by [`action_probability`].
pub fn willingness_at_entry<R: Rng + ?Sized>(
    adaptation: AdaptationMode,
    effort: EffortMode,
    g: f64,
    rng: &mut R,
) -> f64 {
    match (effort, adaptation) {
        (EffortMode::Constant, AdaptationMode::Continuous) => rng.random::<f64>(),
        (EffortMode::Constant, AdaptationMode::Binary) => g,
        (EffortMode::Flexible, _) => 1.0,
    }
}

/// Probability that a losing agent acts this step.
///
/// Flexible effort uses `min(1, lambda_flex / (s - f))`, which is 1 once the
/// gap to the threshold is at most `lambda_flex` (or non-positive).
pub fn action_probability(effort: EffortMode, willingness: f64, lambda_flex: f64, threshold: f64, score: f64) -> f64 {
    match effort {
        EffortMode::Constant => willingness.clamp(0.0, 1.0),
        EffortMode::Flexible => {
            let gap = threshold - score;
            if gap <= 0.0 || gap <= lambda_flex {
                1.0
            } else {
                (lambda_flex / gap).min(1.0)
            }
        }
    }
}

/// Truncated `Normal(g, sigma)` on `[0, ∞)` by rejection.
fn draw_gamma<R: Rng + ?Sized>(g: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return g.max(0.0);
    }
    let normal = Normal::new(g, sigma).expect("sigma is finite and non-negative");
    (0..MAX_GAMMA_DRAWS)
        .map(|_| normal.sample(rng))
        .find(|&gamma| gamma >= 0.0)
        .unwrap_or(0.0)
}

/// Applies the adaptation model to an agent at `x` with recommendation `target`.
pub fn adapt<R: Rng + ?Sized>(
    mode: AdaptationMode,
    x: &[f64],
    target: &[f64],
    g: f64,
    sigma_gamma: f64,
    acted: bool,
    rng: &mut R,
) -> BehaviorOutcome {
    debug_assert_eq!(x.len(), target.len());
    if !acted {
        return BehaviorOutcome {
            new_features: x.to_vec(),
            acted: false,
            gamma: None,
            delta_score: 0.0,
        };
    }
    match mode {
        AdaptationMode::Binary => BehaviorOutcome {
            new_features: target.to_vec(),
            acted: true,
            gamma: None,
            delta_score: 0.0,
        },
        AdaptationMode::Continuous => {
            let gamma = draw_gamma(g, sigma_gamma, rng);
            let new_features = x.iter().zip(target).map(|(xi, ti)| xi + gamma * (ti - xi)).collect();
            BehaviorOutcome {
                new_features,
                acted: true,
                gamma: Some(gamma),
                delta_score: 0.0,
            }
        }
    }
}
