//! Parameter sweeps over behavior × g × n_new × seed, with cross-seed
//! aggregation and persistence.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Behavior, SimulationConfig};
use crate::engine;
use crate::error::{Error, Result};
use crate::metrics::AgentSummary;
use crate::output::{self, fmt_opt, fmt_sig, TraceRow};
use crate::rng::hash_words;

pub const DEFAULT_G_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_N_NEW_GRID: [usize; 5] = [8, 9, 10, 11, 12];
pub const DEFAULT_SEEDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub behaviors: Vec<Behavior>,
    pub g_grid: Vec<f64>,
    pub n_new_grid: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Everything not swept comes from here.
    pub base: SimulationConfig,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan::from_base(SimulationConfig::default())
    }
}

/// One run of the grid. Indices refer to positions in the plan's lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub behavior: Behavior,
    pub behavior_index: usize,
    pub g: f64,
    pub g_index: usize,
    pub n_new: usize,
    pub n_index: usize,
    pub seed_index: usize,
    pub master_seed: u64,
}

impl RunSpec {
    pub fn trace_file_name(&self) -> String {
        format!("{}_g{}_n{}_seed{}.csv", self.behavior, fmt_sig(self.g), self.n_new, self.seed_index)
    }
}

impl SweepPlan {
    /// The reported grid around `base`, seeded from `base.master_seed`.
    pub fn from_base(base: SimulationConfig) -> Self {
        SweepPlan {
            behaviors: Behavior::REPORTED.to_vec(),
            g_grid: DEFAULT_G_GRID.to_vec(),
            n_new_grid: DEFAULT_N_NEW_GRID.to_vec(),
            seeds: DEFAULT_SEEDS,
            base_seed: base.master_seed,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.behaviors.is_empty() {
            errs.push("behavior list is empty");
        }
        if self.g_grid.is_empty() {
            errs.push("g grid is empty");
        }
        if self.n_new_grid.is_empty() {
            errs.push("n_new grid is empty");
        }
        if self.seeds == 0 {
            errs.push("seed count must be ≥ 1");
        }
        if !errs.is_empty() {
            return Err(Error::InvalidPlan(errs.join("; ")));
        }
        let bad: Vec<String> = self
            .run_specs()
            .iter()
            .flat_map(|spec| self.config_for(spec).violations())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }

    pub fn run_count(&self) -> usize {
        self.behaviors.len() * self.g_grid.len() * self.n_new_grid.len() * self.seeds
    }

    pub fn derive_seed(&self, behavior_index: usize, g_index: usize, n_index: usize, seed_index: usize) -> u64 {
        hash_words(&[
            self.base_seed,
            behavior_index as u64,
            g_index as u64,
            n_index as u64,
            seed_index as u64,
        ])
    }

    pub fn run_specs(&self) -> Vec<RunSpec> {
        let mut specs = Vec::with_capacity(self.run_count());
        for (bi, &behavior) in self.behaviors.iter().enumerate() {
            for (gi, &g) in self.g_grid.iter().enumerate() {
                for (ni, &n_new) in self.n_new_grid.iter().enumerate() {
                    for si in 0..self.seeds {
                        specs.push(RunSpec {
                            behavior,
                            behavior_index: bi,
                            g,
                            g_index: gi,
                            n_new,
                            n_index: ni,
                            seed_index: si,
                            master_seed: self.derive_seed(bi, gi, ni, si),
                        });
                    }
                }
            }
        }
        specs
    }

    pub fn config_for(&self, spec: &RunSpec) -> SimulationConfig {
        SimulationConfig {
            g: spec.g,
            n_new: spec.n_new,
            master_seed: spec.master_seed,
            ..self.base.clone()
        }
        .with_behavior(spec.behavior)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub outcome: std::result::Result<RunData, String>,
}

#[derive(Debug, Clone)]
pub struct RunData {
    pub trace: Vec<TraceRow>,
    pub agents: Vec<AgentSummary>,
}

/// Cross-seed statistics for one `(behavior, g, n_new, t)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub behavior: Behavior,
    pub g: f64,
    pub n_new: usize,
    pub t: usize,
    pub threshold_mean: Option<f64>,
    pub threshold_std: Option<f64>,
    pub rr_mean: Option<f64>,
    pub rr_std: Option<f64>,
    pub rr_null_count: usize,
    pub stationarity_mean: Option<f64>,
    /// Runs contributing to the cell.
    pub runs: usize,
}

pub const AGGREGATE_HEADER: [&str; 10] = [
    "behavior",
    "g",
    "n_new",
    "t",
    "threshold_mean",
    "threshold_std",
    "rr_mean",
    "rr_std",
    "rr_null_count",
    "stationarity_mean",
];

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = (&RunSpec, &str)> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (&r.spec, e.as_str())))
    }

    pub fn cell(&self, behavior: Behavior, g: f64, n_new: usize) -> Vec<&AggregateRow> {
        self.aggregate
            .iter()
            .filter(|r| r.behavior == behavior && r.g == g && r.n_new == n_new)
            .collect()
    }
}

/// Population mean and standard deviation; `None` for no values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.max(0.0).sqrt()))
}

/// Aggregates traces keyed by their run spec. Failed runs are passed as `None`
/// and skipped. Rows come out sorted by `(behavior, g, n_new, t)`.
pub fn aggregate<'a, I>(runs: I) -> Vec<AggregateRow>
where
    I: IntoIterator<Item = (&'a RunSpec, &'a [TraceRow])>,
{
    type CellKey = (String, u64, usize);
    let mut cells: BTreeMap<CellKey, (Behavior, f64, Vec<&'a [TraceRow]>)> = BTreeMap::new();
    for (spec, trace) in runs {
        // g is non-negative, so its bit pattern sorts like the value
        let key = (spec.behavior.to_string(), spec.g.to_bits(), spec.n_new);
        cells
            .entry(key)
            .or_insert_with(|| (spec.behavior, spec.g, Vec::new()))
            .2
            .push(trace);
    }

    let mut rows = Vec::new();
    for ((_, _, n_new), (behavior, g, traces)) in cells {
        let steps = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        for t in 0..steps {
            let at_t: Vec<&TraceRow> = traces.iter().filter_map(|tr| tr.get(t)).collect();
            let thresholds: Vec<f64> = at_t.iter().filter_map(|r| r.threshold).collect();
            let rrs: Vec<f64> = at_t.iter().filter_map(|r| r.rr).collect();
            let ratios: Vec<f64> = at_t.iter().filter_map(|r| r.stationarity_ratio).collect();
            let th = mean_std(&thresholds);
            let rr = mean_std(&rrs);
            rows.push(AggregateRow {
                behavior,
                g,
                n_new,
                t,
                threshold_mean: th.map(|x| x.0),
                threshold_std: th.map(|x| x.1),
                rr_mean: rr.map(|x| x.0),
                rr_std: rr.map(|x| x.1),
                rr_null_count: at_t.len() - rrs.len(),
                stationarity_mean: mean_std(&ratios).map(|x| x.0),
                runs: at_t.len(),
            });
        }
    }
    rows
}

fn execute(plan: &SweepPlan, spec: RunSpec) -> RunResult {
    let outcome = engine::run(&plan.config_for(&spec))
        .map(|out| RunData {
            trace: out.trace(),
            agents: out.agents,
        })
        .map_err(|e| e.to_string());
    RunResult { spec, outcome }
}

/// Runs every grid point on a pool of `workers` threads (0 = all cores).
/// Results and aggregates do not depend on the worker count.
pub fn run_sweep(plan: &SweepPlan, workers: usize) -> Result<SweepResult> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidPlan(format!("cannot start worker pool: {e}")))?;
    let specs = plan.run_specs();
    let runs: Vec<RunResult> = pool.install(|| specs.into_par_iter().map(|spec| execute(plan, spec)).collect());
    let aggregate = aggregate(
        runs.iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|d| (&r.spec, d.trace.as_slice()))),
    );
    Ok(SweepResult {
        plan: plan.clone(),
        runs,
        aggregate,
    })
}

pub fn aggregate_csv_bytes(rows: &[AggregateRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.behavior.to_string(),
            fmt_sig(r.g),
            r.n_new.to_string(),
            r.t.to_string(),
            fmt_opt(r.threshold_mean),
            fmt_opt(r.threshold_std),
            fmt_opt(r.rr_mean),
            fmt_opt(r.rr_std),
            r.rr_null_count.to_string(),
            fmt_opt(r.stationarity_mean),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Serialize)]
struct RunEntry<'a> {
    #[serde(flatten)]
    spec: &'a RunSpec,
    trace: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    code_version: &'static str,
    plan: &'a SweepPlan,
    run_count: usize,
    failed: usize,
    runs: Vec<RunEntry<'a>>,
}

/// Writes `aggregate.csv`, `runs/<spec>.csv` for each successful run and
/// `manifest.json` into `out_dir`.
pub fn write_outputs(result: &SweepResult, out_dir: &Path) -> Result<()> {
    if result.runs.is_empty() {
        return Err(Error::InvalidPlan("sweep has no runs to write".into()));
    }
    let runs_dir = out_dir.join("runs");
    output::ensure_dir(&runs_dir)?;
    output::write_bytes(&out_dir.join("aggregate.csv"), &aggregate_csv_bytes(&result.aggregate))?;

    let mut entries = Vec::with_capacity(result.runs.len());
    for run in &result.runs {
        let name = run.spec.trace_file_name();
        match &run.outcome {
            Ok(data) => {
                output::write_trace(&runs_dir.join(&name), &data.trace)?;
                entries.push(RunEntry {
                    spec: &run.spec,
                    trace: format!("runs/{name}"),
                    status: "ok",
                    error: None,
                });
            }
            Err(e) => entries.push(RunEntry {
                spec: &run.spec,
                trace: String::new(),
                status: "failed",
                error: Some(e),
            }),
        }
    }
    let manifest = SweepManifest {
        code_version: engine::CODE_VERSION,
        plan: &result.plan,
        run_count: result.runs.len(),
        failed: result.failures().count(),
        runs: entries,
    };
    output::write_json(&out_dir.join("manifest.json"), &manifest)
}

/// Re-aggregates the per-run traces persisted under `out_dir/runs`.
pub fn aggregate_from_disk(plan: &SweepPlan, out_dir: &Path) -> Result<Vec<AggregateRow>> {
    let mut loaded = Vec::new();
    for spec in plan.run_specs() {
        let path = out_dir.join("runs").join(spec.trace_file_name());
        if path.exists() {
            loaded.push((spec, output::read_trace(&path)?));
        }
    }
    Ok(aggregate(loaded.iter().map(|(s, t)| (s, t.as_slice()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, rr: Option<f64>, threshold: Option<f64>) -> TraceRow {
        TraceRow {
            t,
            threshold,
            prev_threshold: None,
            rr,
            pop_size: 10,
            n_winners: 1,
            n_acted: 0,
            n_candidates: 0,
            n_new: 0,
            stationarity_ratio: None,
            mean_score: None,
        }
    }

    fn spec(seed_index: usize) -> RunSpec {
        RunSpec {
            behavior: Behavior::BINARY_CONSTANT,
            behavior_index: 0,
            g: 0.5,
            g_index: 0,
            n_new: 10,
            n_index: 0,
            seed_index,
            master_seed: seed_index as u64,
        }
    }

    #[test]
    fn population_std_of_two_seeds() {
        let (m, s) = mean_std(&[0.4, 0.6]).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
        assert_eq!(mean_std(&[]), None);
    }

    #[test]
    fn aggregation_skips_nulls() {
        let a = vec![row(0, None, Some(0.7)), row(1, Some(0.4), Some(0.7))];
        let b = vec![row(0, None, Some(0.9)), row(1, Some(0.6), None)];
        let (sa, sb) = (spec(0), spec(1));
        let rows = aggregate([(&sa, a.as_slice()), (&sb, b.as_slice())]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].rr_mean, None);
        assert_eq!(rows[0].rr_null_count, 2);
        assert!((rows[0].threshold_mean.unwrap() - 0.8).abs() < 1e-12);
        assert!((rows[1].rr_std.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rows[1].threshold_std, Some(0.0));
    }

    #[test]
    fn default_plan_size() {
        let plan = SweepPlan::default();
        assert_eq!(plan.run_count(), 1500);
        let specs = plan.run_specs();
        assert_eq!(specs.len(), 1500);
        let seeds: std::collections::BTreeSet<_> = specs.iter().map(|s| s.master_seed).collect();
        assert_eq!(seeds.len(), 1500);
    }

    #[test]
    fn empty_plan_rejected() {
        let plan = SweepPlan {
            g_grid: Vec::new(),
            ..Default::default()
        };
        assert!(matches!(run_sweep(&plan, 1), Err(Error::InvalidPlan(_))));
        let plan = SweepPlan {
            seeds: 0,
            ..Default::default()
        };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn invalid_grid_values_rejected() {
        let plan = SweepPlan {
            g_grid: vec![0.5, 1.5],
            ..Default::default()
        };
        assert!(matches!(plan.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn removing_a_run_only_touches_its_cell() {
        let plan = SweepPlan {
            g_grid: vec![0.3, 0.7],
            n_new_grid: vec![10],
            behaviors: vec![Behavior::CONTINUOUS_CONSTANT],
            seeds: 3,
            base: SimulationConfig {
                steps: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let result = run_sweep(&plan, 2).unwrap();
        let all: Vec<_> = result
            .runs
            .iter()
            .map(|r| (&r.spec, r.outcome.as_ref().unwrap().trace.as_slice()))
            .collect();
        let dropped = aggregate(all.iter().copied().filter(|(s, _)| !(s.g_index == 1 && s.seed_index == 0)));
        for (full, partial) in result.aggregate.iter().zip(&dropped) {
            assert_eq!((full.g, full.t), (partial.g, partial.t));
            if full.g == 0.3 {
                assert_eq!(full, partial);
            } else {
                assert_eq!(partial.runs, 2);
            }
        }
    }
}
