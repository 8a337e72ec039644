//! Minimum-cost counterfactuals for a linear scorer.
//!
//! Cost is the L2 distance in feature space. For `f(x) = sigmoid(w·x + b)` the
//! cheapest point reaching score `s` is the orthogonal projection of `x` onto
//! the hyperplane `w·x' + b = logit(s)`:
//!
//! ```text
//! x' = x + (logit(s) - (w·x + b)) / ‖w‖² · w
//! ```
//!
//! Agents already at or above `s` are left where they are.

use serde::{Deserialize, Serialize};

use crate::domain::AgentId;
use crate::error::{Error, Result};
use crate::scorer::{logit, LinearScorer};

#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub target_features: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub agent_id: AgentId,
    pub target_features: Vec<f64>,
    pub target_score: f64,
    pub cost: f64,
    pub issued_at: usize,
}

fn check_inputs(scorer: &LinearScorer, x: &[f64], s: f64) -> Result<f64> {
    if x.len() != scorer.dim() {
        return Err(Error::Recourse(format!(
            "feature vector has dimension {}, scorer expects {}",
            x.len(),
            scorer.dim()
        )));
    }
    if scorer.weight_norm_sq() == 0.0 {
        return Err(Error::Recourse("zero weight vector has no improving direction".into()));
    }
    logit(s)
}

/// Closest point (in L2) to `x` whose score is at least `s`.
pub fn counterfactual(scorer: &LinearScorer, x: &[f64], s: f64) -> Result<Counterfactual> {
    let target_margin = check_inputs(scorer, x, s)?;
    if scorer.score(x) >= s {
        return Ok(Counterfactual {
            target_features: x.to_vec(),
            cost: 0.0,
        });
    }
    let step = (target_margin - scorer.margin(x)) / scorer.weight_norm_sq();
    let target_features: Vec<f64> = x.iter().zip(&scorer.weights).map(|(xi, wi)| xi + step * wi).collect();
    let cost = step.abs() * scorer.weight_norm();
    Ok(Counterfactual { target_features, cost })
}

impl Recommendation {
    pub fn issue(agent_id: AgentId, issued_at: usize, scorer: &LinearScorer, x: &[f64], s: f64) -> Result<Self> {
        let cf = counterfactual(scorer, x, s)?;
        Ok(Recommendation {
            agent_id,
            target_features: cf.target_features,
            target_score: s,
            cost: cf.cost,
            issued_at,
        })
    }

    /// Zero-cost recommendation for an agent already tied with the threshold.
    pub fn stay(agent_id: AgentId, issued_at: usize, x: &[f64], s: f64) -> Self {
        Recommendation {
            agent_id,
            target_features: x.to_vec(),
            target_score: s,
            cost: 0.0,
            issued_at,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::sigmoid;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn unit_gap_along_axis() {
        let s = LinearScorer::new(vec![1.0, 0.0], 0.0);
        let cf = counterfactual(&s, &[0.0, 0.0], sigmoid(1.0)).unwrap();
        assert!(close(&cf.target_features, &[1.0, 0.0], 1e-12));
        assert!((cf.cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_four_five() {
        let s = LinearScorer::new(vec![3.0, 4.0], 0.0);
        let cf = counterfactual(&s, &[0.0, 0.0], sigmoid(5.0)).unwrap();
        assert!(close(&cf.target_features, &[0.6, 0.8], 1e-12));
        assert!((s.margin(&cf.target_features) - 5.0).abs() < 1e-12);
        assert!((cf.cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn already_feasible_costs_nothing() {
        let s = LinearScorer::new(vec![1.0, 2.0], -0.3);
        let x = [0.4, 0.1];
        let cf = counterfactual(&s, &x, s.score(&x)).unwrap();
        assert_eq!(cf.target_features, x);
        assert_eq!(cf.cost, 0.0);
        let cf = counterfactual(&s, &x, s.score(&x) - 0.1).unwrap();
        assert_eq!(cf.cost, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let zero = LinearScorer::new(vec![0.0, 0.0], 0.0);
        assert!(counterfactual(&zero, &[0.0, 0.0], 0.7).is_err());
        let s = LinearScorer::new(vec![1.0, 0.0], 0.0);
        assert!(counterfactual(&s, &[0.0, 0.0], 1.0).is_err());
        assert!(counterfactual(&s, &[0.0, 0.0], 0.0).is_err());
        assert!(counterfactual(&s, &[0.0], 0.7).is_err());
    }

    #[test]
    fn recommendation_fields() {
        let s = LinearScorer::new(vec![1.0, 0.0], 0.0);
        let r = Recommendation::issue(AgentId(9), 4, &s, &[0.0, 0.0], 0.8).unwrap();
        assert_eq!((r.agent_id, r.issued_at, r.target_score), (AgentId(9), 4, 0.8));
        assert!((s.score(&r.target_features) - 0.8).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_instance() -> impl Strategy<Value = (LinearScorer, Vec<f64>, f64)> {
            (
                prop::collection::vec(-3.0f64..3.0, 2),
                -2.0f64..2.0,
                prop::collection::vec(-2.0f64..2.0, 2),
                0.01f64..0.99,
            )
                .prop_filter("non-degenerate weights", |(w, ..)| w[0].hypot(w[1]) > 0.05)
                .prop_map(|(w, b, x, s)| (LinearScorer::new(w, b), x, s))
        }

        proptest! {
            #[test]
            fn hits_target_exactly((scorer, x, s) in arb_instance()) {
                let cf = counterfactual(&scorer, &x, s).unwrap();
                let reached = scorer.score(&cf.target_features);
                if scorer.score(&x) < s {
                    prop_assert!((reached - s).abs() < 1e-9);
                } else {
                    prop_assert_eq!(cf.cost, 0.0);
                }
            }

            #[test]
            fn displacement_is_parallel_to_weights((scorer, x, s) in arb_instance()) {
                let cf = counterfactual(&scorer, &x, s).unwrap();
                prop_assume!(cf.cost > 1e-9);
                let d: Vec<f64> = cf.target_features.iter().zip(&x).map(|(a, b)| a - b).collect();
                let cos = crate::scorer::dot(&d, &scorer.weights)
                    / (crate::scorer::dot(&d, &d).sqrt() * scorer.weight_norm());
                prop_assert!((cos.abs() - 1.0).abs() < 1e-9);
                prop_assert!((cf.cost - crate::scorer::dot(&d, &d).sqrt()).abs() < 1e-9);
            }

            #[test]
            fn counterfactual_is_idempotent((scorer, x, s) in arb_instance()) {
                let cf = counterfactual(&scorer, &x, s).unwrap();
                let again = counterfactual(&scorer, &cf.target_features, s).unwrap();
                // sigmoid rounding can leave x' one ulp short of s
                prop_assert!(again.cost < 1e-12);
            }
        }
    }
}
