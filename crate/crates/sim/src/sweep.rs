//! Replicated runs and their aggregation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wsnfm_core::engine::{self, RunMetrics, RunOutcome};
use wsnfm_core::topology::deploy_uniform;
use wsnfm_core::Algorithm;

use crate::config::ExperimentConfig;

/// Metric names in output order.
pub const METRICS: [&str; 7] = [
    "recovery_energy",
    "recovery_latency",
    "recovery_rounds",
    "recovery_messages",
    "report_messages",
    "detection_latency",
    "total_energy",
];

/// Value of `METRICS[i]` for one run; `None` when the run never detected anything.
pub fn metric_value(m: &RunMetrics, i: usize) -> Option<f64> {
    match METRICS[i] {
        "recovery_energy" => Some(m.recovery_energy),
        "recovery_latency" => Some(m.recovery_latency as f64),
        "recovery_rounds" => Some(m.recovery_rounds as f64),
        "recovery_messages" => Some(m.recovery_messages as f64),
        "report_messages" => Some(m.report_messages as f64),
        "detection_latency" => m.detection_latency.map(|t| t as f64),
        "total_energy" => Some(m.total_energy),
        _ => unreachable!("metric table and match disagree"),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("run failed (node_count={node_count}, algorithm={algorithm}, seed={seed}): {source}")]
pub struct SweepError {
    pub node_count: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    #[source]
    pub source: wsnfm_core::Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunKey {
    pub node_count: usize,
    pub algorithm: Algorithm,
    pub replicate: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub node_count: usize,
    pub algorithm: Algorithm,
    pub metric: &'static str,
    pub mean: f64,
    pub stdev: f64,
    /// Runs that contributed a value.
    pub replications: usize,
    pub seed_base: u64,
}

/// One seeded run. The seed fixes the deployment, the fault target and every loss draw.
pub fn run_one(cfg: &ExperimentConfig, node_count: usize, algorithm: Algorithm, seed: u64) -> Result<RunOutcome, SweepError> {
    let sim = cfg.sim_for(algorithm);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deployment = deploy_uniform(node_count, sim.area_width, sim.area_height, &mut rng);
    let faults = cfg.scenario.faults(cfg.fault_at);
    engine::run(&sim, &deployment, &faults, seed).map_err(|source| SweepError { node_count, algorithm, seed, source })
}

pub fn run_keys(cfg: &ExperimentConfig) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &node_count in &cfg.node_counts {
        for &algorithm in &cfg.algorithms {
            for replicate in 0..cfg.replications {
                let seed = cfg.seed_base.wrapping_add(replicate as u64);
                keys.push(RunKey { node_count, algorithm, replicate, seed });
            }
        }
    }
    keys
}

/// Every run of the sweep, in `run_keys` order. Fails with the first failing run in that order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<(RunKey, RunMetrics)>, SweepError> {
    let keys = run_keys(cfg);
    let results: Vec<Result<RunMetrics, SweepError>> =
        keys.par_iter().map(|k| run_one(cfg, k.node_count, k.algorithm, k.seed).map(|o| o.metrics)).collect();
    keys.into_iter().zip(results).map(|(k, r)| r.map(|m| (k, m))).collect()
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn summarize(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Folds runs into one row per (node count, algorithm, metric), in replicate order.
pub fn aggregate(cfg: &ExperimentConfig, runs: &[(RunKey, RunMetrics)]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &node_count in &cfg.node_counts {
        for &algorithm in &cfg.algorithms {
            let group: Vec<&RunMetrics> = runs
                .iter()
                .filter(|(k, _)| k.node_count == node_count && k.algorithm == algorithm)
                .map(|(_, m)| m)
                .collect();
            for (i, metric) in METRICS.iter().enumerate() {
                let values: Vec<f64> = group.iter().filter_map(|m| metric_value(m, i)).collect();
                let Some((mean, stdev)) = summarize(&values) else { continue };
                rows.push(AggregateRow {
                    node_count,
                    algorithm,
                    metric,
                    mean,
                    stdev,
                    replications: values.len(),
                    seed_base: cfg.seed_base,
                });
            }
        }
    }
    rows
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<AggregateRow>, SweepError> {
    let runs = run_all(cfg)?;
    Ok(aggregate(cfg, &runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_edge_cases() {
        assert_eq!(summarize(&[]), None);
        assert_eq!(summarize(&[4.0]), Some((4.0, 0.0)));
        let (m, s) = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn keys_follow_seed_base() {
        let cfg = ExperimentConfig { node_counts: vec![40, 50], replications: 3, seed_base: 10, ..Default::default() };
        let keys = run_keys(&cfg);
        assert_eq!(keys.len(), 6);
        assert_eq!(keys.iter().map(|k| k.seed).collect::<Vec<_>>(), vec![10, 11, 12, 10, 11, 12]);
    }
}
