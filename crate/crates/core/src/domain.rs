//! Core data types shared by the simulator: agents, the run configuration and
//! the per-step record.
//!
//! A [`SimulationConfig`] is a flat key/value document. Its JSON form uses the
//! field names below verbatim (the step count is the key `t`); unknown keys are
//! rejected and missing keys take the defaults of [`SimulationConfig::default`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores closer than this are treated as tied. Exact-adaptation agents land
/// on the threshold up to floating-point rounding, so exact equality is never
/// the right test.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// `score ≥ threshold`, up to [`SCORE_TIE_TOLERANCE`].
pub fn meets_threshold(score: f64, threshold: f64) -> bool {
    score >= threshold - SCORE_TIE_TOLERANCE
}

/// Unique agent identifier, assigned by a monotone counter in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Active,
    /// Received a positive outcome at the given step and left the system.
    Exited(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub features: Vec<f64>,
    /// Agent-level willingness to act on a recommendation, always in `[0, 1]`.
    pub willingness: f64,
    pub entered_at: usize,
    /// Score at the agent's first scoring; frozen afterwards.
    pub initial_score: Option<f64>,
    pub status: AgentStatus,
    /// Whether the agent's features changed in the last inter-step phase.
    pub acted_last_step: bool,
}

impl Agent {
    pub fn new(id: AgentId, features: Vec<f64>, willingness: f64, entered_at: usize) -> Self {
        Agent {
            id,
            features,
            willingness: willingness.clamp(0.0, 1.0),
            entered_at,
            initial_score: None,
            status: AgentStatus::Active,
            acted_last_step: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == AgentStatus::Active
    }

    /// Marks the agent as having exited at step `t`. Exited agents never come back.
    pub fn exit(&mut self, t: usize) {
        debug_assert!(self.is_active(), "agent {} exited twice", self.id);
        if self.is_active() {
            self.status = AgentStatus::Exited(t);
        }
    }

    pub fn exited_at(&self) -> Option<usize> {
        match self.status {
            AgentStatus::Active => None,
            AgentStatus::Exited(t) => Some(t),
        }
    }

    pub fn set_willingness(&mut self, l: f64) {
        self.willingness = l.clamp(0.0, 1.0);
    }

    /// Records the initial score the first time the agent is scored.
    pub fn record_initial_score(&mut self, score: f64) {
        if self.initial_score.is_none() {
            self.initial_score = Some(score);
        }
    }
}

/// How faithfully an acting agent follows its recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationMode {
    /// The agent lands exactly on the recommended configuration.
    Binary,
    /// The agent moves a random fraction of the way (possibly overshooting).
    Continuous,
}

/// What determines an agent's probability of acting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortMode {
    /// Fixed willingness assigned at entry.
    Constant,
    /// Willingness grows as the agent gets closer to the threshold.
    Flexible,
}

impl fmt::Display for AdaptationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdaptationMode::Binary => "binary",
            AdaptationMode::Continuous => "continuous",
        })
    }
}

impl fmt::Display for EffortMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffortMode::Constant => "constant",
            EffortMode::Flexible => "flexible",
        })
    }
}

impl FromStr for AdaptationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "binary" => Ok(AdaptationMode::Binary),
            "continuous" => Ok(AdaptationMode::Continuous),
            other => Err(format!("unknown adaptation mode `{other}` (expected binary|continuous)")),
        }
    }
}

impl FromStr for EffortMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "constant" => Ok(EffortMode::Constant),
            "flexible" => Ok(EffortMode::Flexible),
            other => Err(format!("unknown effort mode `{other}` (expected constant|flexible)")),
        }
    }
}

/// One cell of the adaptation × effort grid, labelled e.g. `binary_constant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Behavior {
    pub adaptation: AdaptationMode,
    pub effort: EffortMode,
}

impl Behavior {
    pub const BINARY_CONSTANT: Behavior = Behavior {
        adaptation: AdaptationMode::Binary,
        effort: EffortMode::Constant,
    };
    pub const CONTINUOUS_CONSTANT: Behavior = Behavior {
        adaptation: AdaptationMode::Continuous,
        effort: EffortMode::Constant,
    };
    pub const CONTINUOUS_FLEXIBLE: Behavior = Behavior {
        adaptation: AdaptationMode::Continuous,
        effort: EffortMode::Flexible,
    };
    pub const BINARY_FLEXIBLE: Behavior = Behavior {
        adaptation: AdaptationMode::Binary,
        effort: EffortMode::Flexible,
    };

    /// The three regimes with reported results; binary/flexible is supported
    /// but left out of default sweeps.
    pub const REPORTED: [Behavior; 3] = [
        Behavior::BINARY_CONSTANT,
        Behavior::CONTINUOUS_CONSTANT,
        Behavior::CONTINUOUS_FLEXIBLE,
    ];
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.adaptation, self.effort)
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, e) = s
            .split_once('_')
            .ok_or_else(|| format!("behavior `{s}` is not of the form <adaptation>_<effort>"))?;
        Ok(Behavior {
            adaptation: a.parse()?,
            effort: e.parse()?,
        })
    }
}

impl Serialize for Behavior {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Behavior {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All parameters of a single simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Initial population size.
    pub p: usize,
    /// Favorable outcomes per step.
    pub k: usize,
    /// New agents entering at every step after the first.
    pub n_new: usize,
    /// Number of steps.
    #[serde(rename = "t")]
    pub steps: usize,
    /// Global ease of acting on recourse, in `[0, 1]`.
    pub g: f64,
    pub adaptation_mode: AdaptationMode,
    pub effort_mode: EffortMode,
    /// Standard deviation of the continuous adaptation step factor.
    pub sigma_gamma: f64,
    /// Scale of the flexible-effort acting probability.
    pub lambda_flex: f64,
    pub feature_dim: usize,
    pub feature_mean: f64,
    pub feature_sd: f64,
    /// Bernoulli parameter of the random training labels.
    pub label_prob: f64,
    pub master_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            p: 100,
            k: 10,
            n_new: 10,
            steps: 50,
            g: 0.5,
            adaptation_mode: AdaptationMode::Binary,
            effort_mode: EffortMode::Constant,
            sigma_gamma: 0.25,
            lambda_flex: 0.1,
            feature_dim: 2,
            feature_mean: 0.5,
            feature_sd: 1.0 / 3.0,
            label_prob: 0.5,
            master_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn behavior(&self) -> Behavior {
        Behavior {
            adaptation: self.adaptation_mode,
            effort: self.effort_mode,
        }
    }

    pub fn with_behavior(mut self, behavior: Behavior) -> Self {
        self.adaptation_mode = behavior.adaptation;
        self.effort_mode = behavior.effort;
        self
    }

    /// Checks every invariant and reports all violations at once.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.k < 1 {
            errs.push("k must be ≥ 1".to_string());
        }
        if self.p < self.k {
            errs.push(format!("p must be ≥ k (p = {}, k = {})", self.p, self.k));
        }
        if self.steps < 1 {
            errs.push("t (number of steps) must be ≥ 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.g) {
            errs.push(format!("g must lie in [0,1] (got {})", self.g));
        }
        if !(self.sigma_gamma >= 0.0 && self.sigma_gamma.is_finite()) {
            errs.push(format!("sigma_gamma must be ≥ 0 (got {})", self.sigma_gamma));
        }
        if !(self.lambda_flex > 0.0 && self.lambda_flex.is_finite()) {
            errs.push(format!("lambda_flex must be > 0 (got {})", self.lambda_flex));
        }
        if !(self.label_prob > 0.0 && self.label_prob < 1.0) {
            errs.push(format!("label_prob must lie in (0,1) (got {})", self.label_prob));
        }
        if self.feature_dim < 1 {
            errs.push("feature_dim must be ≥ 1".to_string());
        }
        if !self.feature_mean.is_finite() {
            errs.push(format!("feature_mean must be finite (got {})", self.feature_mean));
        }
        if !(self.feature_sd >= 0.0 && self.feature_sd.is_finite()) {
            errs.push(format!("feature_sd must be ≥ 0 (got {})", self.feature_sd));
        }
        errs
    }

    /// Returns the config unchanged if it is valid, otherwise every violation.
    pub fn validate(self) -> std::result::Result<Self, Vec<String>> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(errs)
        }
    }

    pub fn from_json_str(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Output of one simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// `s_t`, the lowest winner score; absent when the population was empty.
    pub threshold: Option<f64>,
    /// `s_{t-1}`; absent at `t = 0` or after an empty step.
    pub prev_threshold: Option<f64>,
    pub winner_ids: Vec<AgentId>,
    pub candidate_ids: Vec<AgentId>,
    /// Recourse reliability; absent exactly when there were no candidates.
    pub rr: Option<f64>,
    pub pop_size: usize,
    /// Agents whose features changed in the preceding inter-step phase.
    pub n_acted: usize,
    pub n_new: usize,
    pub stationarity_ratio: Option<f64>,
    pub mean_score: Option<f64>,
}
