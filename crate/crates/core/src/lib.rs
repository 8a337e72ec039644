//! Agent-based simulation of algorithmic recourse when agents compete for a
//! fixed number of favorable outcomes per step.
//!
//! Modules, bottom-up:
//!
//! - [`domain`]: agents, run configuration, step records
//! - [`scorer`]: logistic scorer trained once on the initial population
//! - [`recourse`]: minimum-L2 counterfactuals for the linear scorer
//! - [`behavior`]: effort (whether to act) and adaptation (how far to move)
//! - [`engine`]: the per-step loop
//! - [`metrics`]: recourse reliability, stationarity ratio, group rates, histograms
//! - [`harness`]: multi-seed parameter sweeps and aggregation
//! - [`cli`]: the `recourse-sim` command

pub mod behavior;
pub mod cli;
pub mod domain;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod output;
pub mod recourse;
pub mod rng;
pub mod scorer;

pub use domain::{AdaptationMode, Agent, AgentId, Behavior, EffortMode, SimulationConfig, StepRecord};
pub use engine::{run, RunOutput, SimulationState};
pub use error::{Error, Result};
pub use harness::{run_sweep, SweepPlan, SweepResult};
pub use scorer::LinearScorer;
