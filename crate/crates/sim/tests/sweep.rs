use proptest::prelude::*;
use statrs::statistics::Statistics;

use wsnfm::sweep::{aggregate, metric_value, run_all, summarize, METRICS};
use wsnfm::{emit_csv, run_sweep, ExperimentConfig, OutputError, Scenario};
use wsnfm_core::Algorithm;

fn small(replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        node_counts: vec![40, 50, 60, 70, 80],
        algorithms: vec![Algorithm::Cellular, Algorithm::Venkataraman],
        replications,
        seed_base: 11,
        ..ExperimentConfig::default()
    }
}

proptest! {
    #[test]
    fn summary_matches_statrs(values in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        let (mean, stdev) = summarize(&values).unwrap();
        prop_assert!((mean - values.iter().mean()).abs() <= 1e-9);
        prop_assert!((stdev - values.iter().std_dev()).abs() <= 1e-9);
    }
}

#[test]
fn aggregates_match_statrs_over_the_raw_runs() {
    let cfg = small(6);
    let runs = run_all(&cfg).unwrap();
    assert_eq!(runs.len(), 5 * 2 * 6);
    let rows = aggregate(&cfg, &runs);
    for row in &rows {
        let i = METRICS.iter().position(|m| *m == row.metric).unwrap();
        let values: Vec<f64> = runs
            .iter()
            .filter(|(k, _)| k.node_count == row.node_count && k.algorithm == row.algorithm)
            .filter_map(|(_, m)| metric_value(m, i))
            .collect();
        assert_eq!(row.replications, values.len());
        assert!((row.mean - values.iter().mean()).abs() <= 1e-9, "{row:?}");
        assert!((row.stdev - values.iter().std_dev()).abs() <= 1e-9, "{row:?}");
        assert_eq!(row.seed_base, 11);
    }
}

#[test]
fn one_group_per_node_count_and_algorithm() {
    let rows = run_sweep(&small(2)).unwrap();
    let mut groups: Vec<_> = rows.iter().map(|r| (r.node_count, r.algorithm)).collect();
    groups.dedup();
    assert_eq!(groups.len(), 10);
    // Every group detected its fault, so every metric is present.
    assert_eq!(rows.len(), 10 * METRICS.len());
}

#[test]
fn single_replication_has_zero_spread() {
    let rows = run_sweep(&small(1)).unwrap();
    assert!(rows.iter().all(|r| r.stdev == 0.0 && r.replications == 1));
}

#[test]
fn csv_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { scenario: Scenario::ReClustering, ..small(3) };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let rows = run_sweep(&cfg).unwrap();
    emit_csv(&rows, &a).unwrap();
    emit_csv(&run_sweep(&cfg).unwrap(), &b).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert_eq!(text.lines().next().unwrap(), "node_count,algorithm,metric,mean,stdev,replications,seed_base");
    assert!(text.lines().nth(1).unwrap().starts_with("40,cellular,recovery_energy,"));
}

#[test]
fn empty_results_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    assert!(matches!(emit_csv(&[], &path), Err(OutputError::Empty)));
    assert!(!path.exists());
}
