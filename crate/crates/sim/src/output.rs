//! CSV writers for aggregates, traces and role-change logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use wsnfm_core::engine::{RunOutcome, ROLE_HEADER, TRACE_HEADER};
use wsnfm_core::Algorithm;

use crate::sweep::AggregateRow;

pub const RESULTS_HEADER: [&str; 7] = ["node_count", "algorithm", "metric", "mean", "stdev", "replications", "seed_base"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("no rows to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Writes the aggregate table. Nothing is created when `rows` is empty.
pub fn emit_csv(rows: &[AggregateRow], path: &Path) -> Result<(), OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(RESULTS_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.node_count.to_string(),
            r.algorithm.name().to_string(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.stdev.to_string(),
            r.replications.to_string(),
            r.seed_base.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<(), OutputError> {
    let err = |source| OutputError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    writeln!(w, "{header}").map_err(err)?;
    for l in lines {
        writeln!(w, "{l}").map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn write_trace(outcome: &RunOutcome, path: &Path) -> Result<(), OutputError> {
    write_lines(path, TRACE_HEADER, outcome.trace_lines())
}

pub fn write_roles(outcome: &RunOutcome, path: &Path) -> Result<(), OutputError> {
    write_lines(path, ROLE_HEADER, outcome.role_lines())
}

/// `trace.csv` becomes `trace-n60-cellular.csv` when a sweep has several combinations.
pub fn per_run_path(base: &Path, node_count: usize, algorithm: Algorithm, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-n{node_count}-{algorithm}.{}", ext.to_string_lossy()),
        None => format!("{stem}-n{node_count}-{algorithm}"),
    };
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_run_names() {
        let p = Path::new("out/trace.csv");
        assert_eq!(per_run_path(p, 60, Algorithm::Lbc, false), PathBuf::from("out/trace.csv"));
        assert_eq!(per_run_path(p, 60, Algorithm::Lbc, true), PathBuf::from("out/trace-n60-lbc.csv"));
        assert_eq!(per_run_path(Path::new("log"), 40, Algorithm::Aso, true), PathBuf::from("log-n40-aso"));
    }
}
