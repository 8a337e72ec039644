//! Recourse reliability, the threshold-stationarity ratio, and population
//! analyses (positive-outcome rates by initial-score group, score histograms).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{meets_threshold, AgentId};
use crate::error::{Error, Result};

/// `|C ∩ W| / |C|`, or `None` when there are no candidates.
pub fn recourse_reliability(candidates: &[AgentId], winners: &[AgentId]) -> Option<f64> {
    let candidates: BTreeSet<_> = candidates.iter().collect();
    if candidates.is_empty() {
        return None;
    }
    let winners: BTreeSet<_> = winners.iter().collect();
    let hits = candidates.intersection(&winners).count();
    Some(hits as f64 / candidates.len() as f64)
}

/// Realized stationarity ratio: agents scoring at or above the previous
/// threshold, divided by `k`. A value of 1 is the constant-threshold condition.
pub fn stationarity_ratio(scores: &[f64], prev_threshold: f64, k: usize) -> f64 {
    assert!(k >= 1, "k must be ≥ 1");
    let above = scores.iter().filter(|&&s| meets_threshold(s, prev_threshold)).count();
    above as f64 / k as f64
}

/// What the group analysis needs to know about each agent that ever entered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: AgentId,
    pub entered_at: usize,
    pub initial_score: f64,
    /// Step of the positive outcome, if any.
    pub exited_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRateSeries {
    pub labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// `rates[group][t]`: fraction of the group with a positive outcome by `t`.
    pub rates: Vec<Vec<f64>>,
}

impl GroupRateSeries {
    pub fn final_rate(&self, group: usize) -> Option<f64> {
        self.rates.get(group)?.last().copied()
    }
}

pub fn group_labels(n_groups: usize) -> Vec<String> {
    match n_groups {
        0 => Vec::new(),
        1 => vec!["All".to_string()],
        n => (0..n)
            .map(|i| match i {
                0 => "Lowest".to_string(),
                i if i == n - 1 => "Highest".to_string(),
                i => format!("Q{}", i + 1),
            })
            .collect(),
    }
}

/// Bins agents into `n_groups` equal-count bins by initial score (ties by id)
/// and tracks each bin's cumulative positive-outcome rate over `steps` steps.
pub fn group_outcome_rates(agents: &[AgentSummary], n_groups: usize, steps: usize) -> Result<GroupRateSeries> {
    if n_groups == 0 {
        return Err(Error::Metric("need at least one group".into()));
    }
    if agents.len() < n_groups {
        return Err(Error::Metric(format!(
            "{} agents cannot fill {} groups",
            agents.len(),
            n_groups
        )));
    }
    let mut order: Vec<&AgentSummary> = agents.iter().collect();
    order.sort_by(|a, b| a.initial_score.total_cmp(&b.initial_score).then(a.id.cmp(&b.id)));

    let n = order.len();
    let mut group_sizes = Vec::with_capacity(n_groups);
    let mut rates = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let members = &order[g * n / n_groups..(g + 1) * n / n_groups];
        let mut exits_per_step = vec![0usize; steps];
        for a in members {
            if let Some(t) = a.exited_at.filter(|&t| t < steps) {
                exits_per_step[t] += 1;
            }
        }
        let mut cumulative = 0usize;
        let series = exits_per_step
            .iter()
            .map(|&c| {
                cumulative += c;
                cumulative as f64 / members.len() as f64
            })
            .collect();
        group_sizes.push(members.len());
        rates.push(series);
    }
    Ok(GroupRateSeries {
        labels: group_labels(n_groups),
        group_sizes,
        rates,
    })
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub t: usize,
    pub n_bins: usize,
    /// Empty when the population was empty.
    pub counts: Vec<u64>,
    pub mean_score: Option<f64>,
}

impl ScoreHistogram {
    pub fn is_empty_marker(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = 1.0 / self.n_bins as f64;
        (bin as f64 * w, (bin + 1) as f64 * w)
    }
}

/// Fixed-width histogram of scores over `[0, 1]`; a score of exactly 1 falls
/// into the last bin.
pub fn score_distribution_snapshot(scores: &[f64], t: usize, n_bins: usize) -> ScoreHistogram {
    assert!(n_bins >= 1, "histogram needs at least one bin");
    if scores.is_empty() {
        return ScoreHistogram {
            t,
            n_bins,
            counts: Vec::new(),
            mean_score: None,
        };
    }
    let mut counts = vec![0u64; n_bins];
    for &s in scores {
        let bin = ((s.clamp(0.0, 1.0) * n_bins as f64) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    ScoreHistogram {
        t,
        n_bins,
        counts,
        mean_score: Some(scores.iter().sum::<f64>() / scores.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> Vec<AgentId> {
        v.iter().copied().map(AgentId).collect()
    }

    #[test]
    fn reliability_examples() {
        assert_eq!(recourse_reliability(&ids(&[1, 2, 3, 4]), &ids(&[2, 4, 9])), Some(0.5));
        assert_eq!(recourse_reliability(&ids(&[1, 2]), &ids(&[1, 2, 3])), Some(1.0));
        assert_eq!(recourse_reliability(&[], &ids(&[1])), None);
        assert_eq!(recourse_reliability(&ids(&[5]), &[]), Some(0.0));
    }

    #[test]
    fn stationarity_examples() {
        let scores: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        // exactly 10 of 30 at or above 20/30
        assert_eq!(stationarity_ratio(&scores, 20.0 / 30.0, 10), 1.0);
        assert_eq!(stationarity_ratio(&scores, 1.5, 10), 0.0);
        assert_eq!(stationarity_ratio(&scores, 10.0 / 30.0, 10), 2.0);
    }

    #[test]
    fn stationarity_counts_ties_at_rounding_level() {
        let s = 0.9;
        let scores = [s + 1e-16, s - 1e-16, s - 1e-6];
        assert_eq!(stationarity_ratio(&scores, s, 1), 2.0);
    }

    fn summary(id: u64, score: f64, exited: Option<usize>) -> AgentSummary {
        AgentSummary {
            id: AgentId(id),
            entered_at: 0,
            initial_score: score,
            exited_at: exited,
        }
    }

    #[test]
    fn top_bin_only_winners() {
        // 8 agents, 4 bins of 2; the two best win at t = 0 and t = 1.
        let agents: Vec<_> = (0..8)
            .map(|i| summary(i, i as f64 / 10.0, match i { 7 => Some(0), 6 => Some(1), _ => None }))
            .collect();
        let series = group_outcome_rates(&agents, 4, 3).unwrap();
        assert_eq!(series.labels, ["Lowest", "Q2", "Q3", "Highest"]);
        assert_eq!(series.group_sizes, [2, 2, 2, 2]);
        assert_eq!(series.rates[3], [0.5, 1.0, 1.0]);
        assert_eq!(series.rates[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn even_spread_gives_equal_series() {
        let agents: Vec<_> = (0..8).map(|i| summary(i, i as f64, (i % 2 == 0).then_some(0))).collect();
        let series = group_outcome_rates(&agents, 4, 1).unwrap();
        assert!(series.rates.iter().all(|r| r == &series.rates[0]));
    }

    #[test]
    fn too_few_agents_for_groups() {
        let agents = [summary(0, 0.1, None), summary(1, 0.2, None)];
        assert!(group_outcome_rates(&agents, 4, 5).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = score_distribution_snapshot(&[0.5; 7], 3, 20);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[10], 7);
        assert_eq!(h.total(), 7);
        assert_eq!(h.bin_edges(10), (0.5, 0.55));

        let h = score_distribution_snapshot(&[0.0, 1.0, 0.999], 0, 20);
        assert_eq!((h.counts[0], h.counts[19]), (1, 2));

        let empty = score_distribution_snapshot(&[], 0, 20);
        assert!(empty.is_empty_marker());
        assert_eq!(empty.mean_score, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reliability_is_permutation_and_relabel_invariant(
                cand in prop::collection::btree_set(0u64..40, 0..15),
                win in prop::collection::btree_set(0u64..40, 0..10),
                shift in 1u64..1000,
            ) {
                let c: Vec<_> = cand.iter().copied().map(AgentId).collect();
                let w: Vec<_> = win.iter().copied().map(AgentId).collect();
                let base = recourse_reliability(&c, &w);
                let rc: Vec<_> = c.iter().rev().copied().collect();
                let rw: Vec<_> = w.iter().rev().copied().collect();
                prop_assert_eq!(recourse_reliability(&rc, &rw), base);
                let relabel = |v: &[AgentId]| v.iter().map(|a| AgentId(a.0 * 7 + shift)).collect::<Vec<_>>();
                prop_assert_eq!(recourse_reliability(&relabel(&c), &relabel(&w)), base);
                prop_assert_eq!(base.is_none(), c.is_empty());
                if let Some(rr) = base {
                    prop_assert!((0.0..=1.0).contains(&rr));
                }
            }

            #[test]
            fn histogram_conserves_count(scores in prop::collection::vec(0.0f64..=1.0, 1..300), bins in 1usize..40) {
                let h = score_distribution_snapshot(&scores, 0, bins);
                prop_assert_eq!(h.total(), scores.len() as u64);
            }

            #[test]
            fn group_rates_are_monotone_fractions(
                raw in prop::collection::vec((0.0f64..1.0, prop::option::of(0usize..12)), 4..80),
                n_groups in 1usize..5,
            ) {
                let agents: Vec<_> = raw.iter().enumerate()
                    .map(|(i, &(s, e))| summary(i as u64, s, e)).collect();
                let series = group_outcome_rates(&agents, n_groups, 12).unwrap();
                prop_assert_eq!(series.group_sizes.iter().sum::<usize>(), agents.len());
                for r in &series.rates {
                    prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
                    prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }
}
