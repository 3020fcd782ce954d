use anyhow::Context;
use clap::Parser;

use wsnfm::output::{per_run_path, write_roles, write_trace};
use wsnfm::{emit_csv, run_one, run_sweep, ExperimentConfig, Flags};

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_flags(Flags::parse())?;
    let rows = run_sweep(&cfg)?;
    emit_csv(&rows, &cfg.out)?;
    println!("{} rows -> {}", rows.len(), cfg.out.display());

    if cfg.trace.is_some() || cfg.roles.is_some() {
        let several = cfg.node_counts.len() * cfg.algorithms.len() > 1;
        for &n in &cfg.node_counts {
            for &alg in &cfg.algorithms {
                let outcome = run_one(&cfg, n, alg, cfg.seed_base)?;
                if let Some(base) = &cfg.trace {
                    let path = per_run_path(base, n, alg, several);
                    write_trace(&outcome, &path).with_context(|| format!("trace for n={n} {alg}"))?;
                }
                if let Some(base) = &cfg.roles {
                    let path = per_run_path(base, n, alg, several);
                    write_roles(&outcome, &path).with_context(|| format!("role log for n={n} {alg}"))?;
                }
            }
        }
    }
    Ok(())
}
