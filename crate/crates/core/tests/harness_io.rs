//! Sweep outputs on disk.

use recourse_sim::domain::{Behavior, SimulationConfig};
use recourse_sim::harness::{self, SweepPlan};
use recourse_sim::output::read_trace;

fn small_plan() -> SweepPlan {
    SweepPlan {
        g_grid: vec![0.3, 0.7],
        n_new_grid: vec![9, 12],
        seeds: 3,
        base_seed: 11,
        ..SweepPlan::from_base(SimulationConfig::default())
    }
}

#[test]
fn aggregate_recomputed_from_disk_matches_memory() {
    let plan = small_plan();
    let result = harness::run_sweep(&plan, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::write_outputs(&result, dir.path()).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"base_seed\""));

    let spec = &result.runs[0].spec;
    let trace = read_trace(&dir.path().join("runs").join(spec.trace_file_name())).unwrap();
    assert_eq!(trace.len(), plan.base.steps);

    let from_disk = harness::aggregate_from_disk(&plan, dir.path()).unwrap();
    assert_eq!(from_disk.len(), result.aggregate.len());
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-8 * x.abs().max(1.0),
        (x, y) => x == y,
    };
    for (d, m) in from_disk.iter().zip(&result.aggregate) {
        assert_eq!((d.behavior, d.g, d.n_new, d.t), (m.behavior, m.g, m.n_new, m.t));
        assert!(close(d.threshold_mean, m.threshold_mean), "{d:?} vs {m:?}");
        assert!(close(d.threshold_std, m.threshold_std), "{d:?} vs {m:?}");
        assert!(close(d.rr_mean, m.rr_mean), "{d:?} vs {m:?}");
        assert!(close(d.rr_std, m.rr_std), "{d:?} vs {m:?}");
        assert_eq!(d.rr_null_count, m.rr_null_count);
        assert!(close(d.stationarity_mean, m.stationarity_mean), "{d:?} vs {m:?}");
    }
}

#[test]
fn rerun_writes_identical_files() {
    let plan = small_plan();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    harness::write_outputs(&harness::run_sweep(&plan, 1).unwrap(), a.path()).unwrap();
    harness::write_outputs(&harness::run_sweep(&plan, 4).unwrap(), b.path()).unwrap();
    for name in ["aggregate.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let mut files: Vec<_> = std::fs::read_dir(a.path().join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files.len(), plan.run_count());
    for f in files {
        assert_eq!(
            std::fs::read(a.path().join("runs").join(&f)).unwrap(),
            std::fs::read(b.path().join("runs").join(&f)).unwrap()
        );
    }
}

#[test]
fn default_plan_aggregate_shape() {
    let plan = SweepPlan::from_base(SimulationConfig::default());
    assert_eq!(plan.run_count(), 1500);
    let result = harness::run_sweep(&plan, 0).unwrap();
    assert_eq!(result.aggregate.len(), 3 * 5 * 5 * 50);
    let csv = String::from_utf8(harness::aggregate_csv_bytes(&result.aggregate)).unwrap();
    assert_eq!(csv.lines().count(), 3750 + 1);
    assert_eq!(result.cell(Behavior::BINARY_CONSTANT, 0.5, 10).len(), 50);
    assert!(result.aggregate.iter().all(|r| r.runs == 20));
}
