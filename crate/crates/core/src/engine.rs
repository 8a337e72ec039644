//! The simulation loop.
//!
//! Each step `t`:
//!
//! ```text
//! 1. t > 0: n_new agents enter; P_t = survivors ∪ entrants
//! 2. score every agent in P_t
//! 3. top-k by score (ties by lower id) win and exit
//! 4. s_t = lowest winner score
//! 5. candidates C_t = survivors that moved last step and reached s_{t-1};
//!    RR_t = |C_t ∩ winners| / |C_t|
//! 6. every loser gets a counterfactual targeting s_t
//! 7. losers decide whether to act, then adapt
//! 8. record the step
//! ```
//!
//! The scorer is trained once on the initial population and frozen.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::behavior::{action_probability, adapt, willingness_at_entry};
use crate::domain::{meets_threshold, Agent, AgentId, EffortMode, SimulationConfig, StepRecord, SCORE_TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::metrics::{
    group_outcome_rates, recourse_reliability, score_distribution_snapshot, stationarity_ratio, AgentSummary,
    GroupRateSeries, ScoreHistogram, DEFAULT_HISTOGRAM_BINS,
};
use crate::output::{self, trace_rows, TraceRow};
use crate::recourse::Recommendation;
use crate::rng::{substream, Stream};
use crate::scorer::{self, LinearScorer, MAX_REFITS};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub winners: Vec<AgentId>,
    pub threshold: f64,
}

/// Picks the `min(k, n)` highest scores, breaking ties by lower id.
///
/// Scores within [`SCORE_TIE_TOLERANCE`] of their neighbour in sorted order
/// form one tie group. Returns `None` for an empty population.
pub fn rank_and_select(scores: &[(AgentId, f64)], k: usize) -> Option<Selection> {
    if scores.is_empty() {
        return None;
    }
    let mut sorted: Vec<(AgentId, f64)> = scores.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut keyed: Vec<(usize, AgentId, f64)> = Vec::with_capacity(sorted.len());
    let mut group = 0usize;
    for (i, &(id, s)) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1].1 - s > SCORE_TIE_TOLERANCE {
            group += 1;
        }
        keyed.push((group, id, s));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.truncate(k.min(keyed.len()));

    let threshold = keyed.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    Some(Selection {
        winners: keyed.into_iter().map(|e| e.1).collect(),
        threshold,
    })
}

/// Creates one agent with features drawn from the entry substream.
fn spawn_agent(config: &SimulationConfig, id: AgentId, t: usize) -> Agent {
    let mut rng = substream(config.master_seed, Stream::Entry, t as u64, id.0);
    let normal = Normal::new(config.feature_mean, config.feature_sd).expect("validated feature distribution");
    let features: Vec<f64> = (0..config.feature_dim).map(|_| normal.sample(&mut rng)).collect();
    let l = willingness_at_entry(config.adaptation_mode, config.effort_mode, config.g, &mut rng);
    Agent::new(id, features, l, t)
}

/// The initial population: ids `0..p`, features i.i.d. `Normal(mean, sd)`.
pub fn init_population(config: &SimulationConfig) -> Vec<Agent> {
    (0..config.p as u64).map(|i| spawn_agent(config, AgentId(i), 0)).collect()
}

/// Fits the frozen scorer on the initial population with Bernoulli labels.
pub fn train_scorer(config: &SimulationConfig, agents: &[Agent]) -> Result<LinearScorer> {
    let mut rng = substream(config.master_seed, Stream::Labels, 0, 0);
    let features: Vec<Vec<f64>> = agents.iter().map(|a| a.features.clone()).collect();
    for _ in 0..=MAX_REFITS {
        let labels: Vec<u8> = (0..features.len())
            .map(|_| u8::from(rng.random_bool(config.label_prob)))
            .collect();
        if labels.contains(&0) && labels.contains(&1) {
            return scorer::train(&features, &labels, config.label_prob, &mut rng);
        }
    }
    Err(Error::Training(format!(
        "labels never contained both classes in {} draws",
        MAX_REFITS + 1
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimulationConfig,
    pub scorer: LinearScorer,
    pub master_seed: u64,
    pub code_version: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Steps at which to keep a score histogram of `P_t`.
    pub snapshot_steps: Vec<usize>,
    pub histogram_bins: usize,
}

impl RunOptions {
    /// First, middle and last step.
    pub fn default_snapshots(steps: usize) -> Self {
        let mut snapshot_steps = vec![0, steps / 2, steps.saturating_sub(1)];
        snapshot_steps.dedup();
        RunOptions {
            snapshot_steps,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

pub struct SimulationState {
    config: SimulationConfig,
    scorer: LinearScorer,
    t: usize,
    active: Vec<Agent>,
    exited: Vec<Agent>,
    next_id: u64,
    threshold_history: Vec<Option<f64>>,
    records: Vec<StepRecord>,
    snapshot_steps: BTreeSet<usize>,
    histogram_bins: usize,
    snapshots: Vec<ScoreHistogram>,
}

impl SimulationState {
    /// Starts from an explicit population and scorer. Agent ids must be unique;
    /// new ids continue after the largest one given.
    pub fn with_population(config: SimulationConfig, scorer: LinearScorer, agents: Vec<Agent>) -> Result<Self> {
        let config = config.validate().map_err(Error::InvalidConfig)?;
        if scorer.dim() != config.feature_dim || agents.iter().any(|a| a.features.len() != config.feature_dim) {
            return Err(Error::InvalidConfig(vec![format!(
                "feature vectors and scorer must have dimension {}",
                config.feature_dim
            )]));
        }
        let distinct: BTreeSet<_> = agents.iter().map(|a| a.id).collect();
        if distinct.len() != agents.len() {
            return Err(Error::InvalidConfig(vec!["agent ids must be unique".into()]));
        }
        let next_id = agents.iter().map(|a| a.id.0 + 1).max().unwrap_or(0);
        Ok(SimulationState {
            config,
            scorer,
            t: 0,
            active: agents,
            exited: Vec::new(),
            next_id,
            threshold_history: Vec::new(),
            records: Vec::new(),
            snapshot_steps: BTreeSet::new(),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            snapshots: Vec::new(),
        })
    }

    /// Samples the initial population and trains the scorer on it.
    pub fn new(config: SimulationConfig) -> Result<Self> {
        let config = config.validate().map_err(Error::InvalidConfig)?;
        let agents = init_population(&config);
        let scorer = train_scorer(&config, &agents)?;
        Self::with_population(config, scorer, agents)
    }

    pub fn with_options(mut self, options: &RunOptions) -> Self {
        self.snapshot_steps = options.snapshot_steps.iter().copied().collect();
        if options.histogram_bins > 0 {
            self.histogram_bins = options.histogram_bins;
        }
        self
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.steps
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn scorer(&self) -> &LinearScorer {
        &self.scorer
    }

    pub fn active_agents(&self) -> &[Agent] {
        &self.active
    }

    pub fn active_agents_mut(&mut self) -> &mut Vec<Agent> {
        &mut self.active
    }

    pub fn exited_agents(&self) -> &[Agent] {
        &self.exited
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn threshold_history(&self) -> &[Option<f64>] {
        &self.threshold_history
    }

    /// Every agent that has entered so far, for the group analysis.
    pub fn agent_summaries(&self) -> Vec<AgentSummary> {
        let mut all: Vec<AgentSummary> = self
            .active
            .iter()
            .chain(&self.exited)
            .filter_map(|a| {
                Some(AgentSummary {
                    id: a.id,
                    entered_at: a.entered_at,
                    initial_score: a.initial_score?,
                    exited_at: a.exited_at(),
                })
            })
            .collect();
        all.sort_by_key(|a| a.id);
        all
    }

    fn admit_new_agents(&mut self) -> usize {
        let t = self.t;
        for _ in 0..self.config.n_new {
            let id = AgentId(self.next_id);
            self.next_id += 1;
            let agent = spawn_agent(&self.config, id, t);
            self.active.push(agent);
        }
        self.config.n_new
    }

    /// Advances one step and returns its record.
    pub fn step(&mut self) -> Result<&StepRecord> {
        assert!(!self.is_finished(), "step called after the last step");
        let t = self.t;
        let k = self.config.k;
        let n_new = if t > 0 { self.admit_new_agents() } else { 0 };
        let prev_threshold = if t > 0 { self.threshold_history[t - 1] } else { None };
        self.active.sort_by_key(|a| a.id);

        let scores: Vec<f64> = self.active.iter().map(|a| self.scorer.score(&a.features)).collect();
        for (agent, &s) in self.active.iter_mut().zip(&scores) {
            agent.record_initial_score(s);
        }
        if self.snapshot_steps.contains(&t) {
            self.snapshots
                .push(score_distribution_snapshot(&scores, t, self.histogram_bins));
        }
        let n_acted = self.active.iter().filter(|a| a.entered_at < t && a.acted_last_step).count();
        let pop_size = self.active.len();
        let mean_score = (pop_size > 0).then(|| scores.iter().sum::<f64>() / pop_size as f64);

        let keyed: Vec<(AgentId, f64)> = self.active.iter().map(|a| a.id).zip(scores.iter().copied()).collect();
        let Some(selection) = rank_and_select(&keyed, k) else {
            self.threshold_history.push(None);
            self.records.push(StepRecord {
                t,
                threshold: None,
                prev_threshold,
                winner_ids: Vec::new(),
                candidate_ids: Vec::new(),
                rr: None,
                pop_size: 0,
                n_acted: 0,
                n_new,
                stationarity_ratio: prev_threshold.map(|s| stationarity_ratio(&[], s, k)),
                mean_score: None,
            });
            self.t += 1;
            return Ok(self.records.last().expect("just pushed"));
        };
        let threshold = selection.threshold;

        let mut candidate_ids: Vec<AgentId> = match prev_threshold {
            Some(prev) => self
                .active
                .iter()
                .zip(&scores)
                .filter(|(a, &s)| a.entered_at < t && a.acted_last_step && meets_threshold(s, prev))
                .map(|(a, _)| a.id)
                .collect(),
            None => Vec::new(),
        };
        candidate_ids.sort();
        let rr = recourse_reliability(&candidate_ids, &selection.winners);
        let stationarity = prev_threshold.map(|s| stationarity_ratio(&scores, s, k));

        let winner_set: BTreeSet<AgentId> = selection.winners.iter().copied().collect();
        let mut survivors = Vec::with_capacity(self.active.len().saturating_sub(winner_set.len()));
        for (mut agent, score) in std::mem::take(&mut self.active).into_iter().zip(scores) {
            if winner_set.contains(&agent.id) {
                agent.exit(t);
                agent.acted_last_step = false;
                self.exited.push(agent);
            } else {
                self.act_on_recourse(&mut agent, score, threshold)?;
                survivors.push(agent);
            }
        }
        self.active = survivors;

        self.threshold_history.push(Some(threshold));
        self.records.push(StepRecord {
            t,
            threshold: Some(threshold),
            prev_threshold,
            winner_ids: selection.winners,
            candidate_ids,
            rr,
            pop_size,
            n_acted,
            n_new,
            stationarity_ratio: stationarity,
            mean_score,
        });
        self.t += 1;
        Ok(self.records.last().expect("just pushed"))
    }

    /// Issues a recommendation to a losing agent and applies its response.
    /// All draws come from the agent's own `(seed, t, id)` substream.
    fn act_on_recourse(&self, agent: &mut Agent, score: f64, threshold: f64) -> Result<Recommendation> {
        let cfg = &self.config;
        let rec = if meets_threshold(score, threshold) {
            Recommendation::stay(agent.id, self.t, &agent.features, threshold)
        } else {
            Recommendation::issue(agent.id, self.t, &self.scorer, &agent.features, threshold)?
        };
        let p = action_probability(cfg.effort_mode, agent.willingness, cfg.lambda_flex, threshold, score);
        if cfg.effort_mode == EffortMode::Flexible {
            agent.set_willingness(p);
        }
        let mut rng = substream(cfg.master_seed, Stream::Action, self.t as u64, agent.id.0);
        let decided = rng.random_bool(p);
        let outcome = adapt(
            cfg.adaptation_mode,
            &agent.features,
            &rec.target_features,
            cfg.g,
            cfg.sigma_gamma,
            decided,
            &mut rng,
        );
        agent.acted_last_step = outcome.acted && outcome.moved(&agent.features);
        agent.features = outcome.new_features;
        Ok(rec)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        let agents = self.agent_summaries();
        RunOutput {
            manifest: RunManifest {
                master_seed: self.config.master_seed,
                config: self.config,
                scorer: self.scorer,
                code_version: CODE_VERSION.to_string(),
            },
            records: self.records,
            agents,
            snapshots: self.snapshots,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<StepRecord>,
    pub agents: Vec<AgentSummary>,
    pub snapshots: Vec<ScoreHistogram>,
}

impl RunOutput {
    pub fn trace(&self) -> Vec<TraceRow> {
        trace_rows(&self.records)
    }

    pub fn trace_csv(&self) -> Vec<u8> {
        output::trace_csv_bytes(&self.trace())
    }

    pub fn group_rates(&self, n_groups: usize) -> Result<GroupRateSeries> {
        group_outcome_rates(&self.agents, n_groups, self.records.len())
    }

    /// Writes `trace.csv`, `manifest.json`, `groups.csv` and one
    /// `hist_t{t}.csv` per kept snapshot into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        output::ensure_dir(dir)?;
        output::write_bytes(&dir.join("trace.csv"), &self.trace_csv())?;
        output::write_json(&dir.join("manifest.json"), &self.manifest)?;
        if let Ok(groups) = self.group_rates(4) {
            output::write_bytes(&dir.join("groups.csv"), &output::groups_csv_bytes(&groups))?;
        }
        for hist in &self.snapshots {
            output::write_bytes(
                &dir.join(format!("hist_t{}.csv", hist.t)),
                &output::histogram_csv_bytes(hist),
            )?;
        }
        Ok(())
    }
}

pub fn run(config: &SimulationConfig) -> Result<RunOutput> {
    run_with(config, &RunOptions::default())
}

pub fn run_with(config: &SimulationConfig, options: &RunOptions) -> Result<RunOutput> {
    let mut state = SimulationState::new(config.clone())?.with_options(options);
    state.run_to_end()?;
    Ok(state.into_output())
}
