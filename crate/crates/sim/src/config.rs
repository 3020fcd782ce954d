//! Command-line flags, `key = value` config files and the resolved experiment.

use std::path::{Path, PathBuf};

use clap::Parser;
use wsnfm_core::{Algorithm, SimConfig, Tick};

use crate::scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`, got `{text}`")]
    Syntax { path: String, line: usize, text: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid value for {key}: {message}")]
    Value { key: &'static str, message: String },
    #[error(transparent)]
    Sim(#[from] wsnfm_core::Error),
}

/// Every flag is optional so that file values can fill the gaps.
#[derive(Parser, Debug, Clone, Default, PartialEq)]
#[command(name = "simulate", about = "Run fault-management simulations and write aggregate metrics as CSV")]
pub struct Flags {
    /// File of `key = value` lines using the flag names; flags win over file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Node count: `60`, a list `40,60,80` or a range `40..80:10`.
    #[arg(long)]
    pub nodes: Option<String>,
    /// Deployment area as `WIDTHxHEIGHT` in metres.
    #[arg(long)]
    pub area: Option<String>,
    #[arg(long)]
    pub cell_side: Option<f64>,
    /// Group side length in cells.
    #[arg(long)]
    pub group_dim: Option<u32>,
    /// `cellular`, `venkataraman`, `lbc`, `aso`, or a comma-separated list.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Seed of replicate 0; replicate i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-receiver loss probability.
    #[arg(long)]
    pub loss: Option<f64>,
    /// Ticks per hop.
    #[arg(long)]
    pub latency: Option<Tick>,
    /// Message trace of replicate 0.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Role-change log of replicate 0.
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Tick of the scenario's fault; defaults to two and a half out-of-cell periods.
    #[arg(long)]
    pub fault_at: Option<Tick>,
    /// Initial battery charge in mJ.
    #[arg(long)]
    pub initial_energy: Option<f64>,
    #[arg(long)]
    pub energy_check: Option<Tick>,
    #[arg(long)]
    pub in_cell_period: Option<Tick>,
    #[arg(long)]
    pub out_cell_period: Option<Tick>,
    #[arg(long)]
    pub query_timeout: Option<Tick>,
    /// Residual fraction at or below which a node is Low.
    #[arg(long)]
    pub low_threshold: Option<f64>,
    /// Residual fraction at or above which a node is High.
    #[arg(long)]
    pub high_threshold: Option<f64>,
    #[arg(long)]
    pub radio_range: Option<f64>,
    #[arg(long)]
    pub max_ticks: Option<Tick>,
}

impl Flags {
    /// Fills every unset field from `file`.
    pub fn or(self, file: Flags) -> Flags {
        Flags {
            config: self.config.or(file.config),
            nodes: self.nodes.or(file.nodes),
            area: self.area.or(file.area),
            cell_side: self.cell_side.or(file.cell_side),
            group_dim: self.group_dim.or(file.group_dim),
            algorithm: self.algorithm.or(file.algorithm),
            scenario: self.scenario.or(file.scenario),
            replications: self.replications.or(file.replications),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            loss: self.loss.or(file.loss),
            latency: self.latency.or(file.latency),
            trace: self.trace.or(file.trace),
            roles: self.roles.or(file.roles),
            fault_at: self.fault_at.or(file.fault_at),
            initial_energy: self.initial_energy.or(file.initial_energy),
            energy_check: self.energy_check.or(file.energy_check),
            in_cell_period: self.in_cell_period.or(file.in_cell_period),
            out_cell_period: self.out_cell_period.or(file.out_cell_period),
            query_timeout: self.query_timeout.or(file.query_timeout),
            low_threshold: self.low_threshold.or(file.low_threshold),
            high_threshold: self.high_threshold.or(file.high_threshold),
            radio_range: self.radio_range.or(file.radio_range),
            max_ticks: self.max_ticks.or(file.max_ticks),
        }
    }
}

/// Parses `key = value` lines. Keys are flag names; `_` and `-` are interchangeable,
/// `#` starts a comment.
pub fn parse_config_text(text: &str, origin: &str) -> Result<Flags, ConfigError> {
    let mut args = vec!["simulate".to_string()];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { path: origin.to_string(), line: i + 1, text: raw.to_string() });
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || value.is_empty() || key == "config" {
            return Err(ConfigError::Syntax { path: origin.to_string(), line: i + 1, text: raw.to_string() });
        }
        args.push(format!("--{key}"));
        args.push(value.to_string());
    }
    Flags::try_parse_from(&args).map_err(|e| ConfigError::File { path: origin.to_string(), message: first_line(&e.to_string()) })
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or("").trim_start_matches("error: ").to_string()
}

pub fn load_config_file(path: &Path) -> Result<Flags, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_text(&text, &path.display().to_string())
}

/// `60`, `40,60,80` or `40..80:10` (inclusive, step defaults to 10).
pub fn parse_node_counts(s: &str) -> Result<Vec<usize>, ConfigError> {
    let bad = |message: &str| ConfigError::Value { key: "nodes", message: format!("{message} in `{s}`") };
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad("expected a positive integer"));
    let counts = if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 10),
        };
        let lo = num(lo)?;
        if step == 0 || lo > hi {
            return Err(bad("range needs lo <= hi and step > 0"));
        }
        (lo..=hi).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(bad("node counts must be >= 1"));
    }
    Ok(counts)
}

pub fn parse_area(s: &str) -> Result<(f64, f64), ConfigError> {
    let bad = || ConfigError::Value { key: "area", message: format!("expected WIDTHxHEIGHT, got `{s}`") };
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: f64 = w.trim().parse().map_err(|_| bad())?;
    let h: f64 = h.trim().parse().map_err(|_| bad())?;
    Ok((w, h))
}

pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, ConfigError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let a: Algorithm = part.trim().parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

/// A fully resolved sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub node_counts: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub scenario: Scenario,
    pub replications: usize,
    pub seed_base: u64,
    /// Template for every run; `algorithm` is overwritten per run.
    pub sim: SimConfig,
    pub fault_at: Tick,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
    pub roles: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            node_counts: vec![40, 50, 60, 70, 80],
            algorithms: vec![Algorithm::Cellular],
            scenario: Scenario::ClusterHeadFailure,
            replications: 30,
            seed_base: 1,
            fault_at: Scenario::default_fault_time(&sim.timers),
            sim,
            out: PathBuf::from("results.csv"),
            trace: None,
            roles: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads the config file named by `--config`, if any, then applies the flags on top.
    pub fn from_flags(flags: Flags) -> Result<Self, ConfigError> {
        let merged = match &flags.config {
            Some(path) => {
                let file = load_config_file(path)?;
                flags.or(file)
            }
            None => flags,
        };
        Self::resolve(merged)
    }

    pub fn resolve(f: Flags) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        if let Some(s) = &f.nodes {
            c.node_counts = parse_node_counts(s)?;
        }
        if let Some(s) = &f.area {
            (c.sim.area_width, c.sim.area_height) = parse_area(s)?;
        }
        if let Some(s) = &f.algorithm {
            c.algorithms = parse_algorithms(s)?;
        }
        if let Some(s) = &f.scenario {
            c.scenario = s.parse()?;
        }
        let sim = &mut c.sim;
        let t = &mut sim.timers;
        macro_rules! set {
            ($($field:expr => $target:expr),* $(,)?) => { $( if let Some(v) = $field { $target = v; } )* };
        }
        set! {
            f.cell_side => sim.cell_side,
            f.group_dim => sim.group_dim,
            f.loss => sim.delivery.loss_probability,
            f.latency => sim.delivery.latency,
            f.initial_energy => sim.initial_energy,
            f.energy_check => t.energy_check_period,
            f.in_cell_period => t.in_cell_period,
            f.out_cell_period => t.out_cell_period,
            f.query_timeout => t.query_timeout,
            f.low_threshold => sim.thresholds.low,
            f.high_threshold => sim.thresholds.high,
            f.radio_range => sim.radio_range,
            f.max_ticks => sim.max_ticks,
            f.replications => c.replications,
            f.seed => c.seed_base,
        }
        c.fault_at = f.fault_at.unwrap_or_else(|| Scenario::default_fault_time(&c.sim.timers));
        if let Some(p) = f.out {
            c.out = p;
        }
        c.trace = f.trace;
        c.roles = f.roles;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(ConfigError::Value { key: "replications", message: "must be >= 1".into() });
        }
        if self.node_counts.is_empty() || self.node_counts.contains(&0) {
            return Err(ConfigError::Value { key: "nodes", message: "node counts must be >= 1".into() });
        }
        if self.algorithms.is_empty() {
            return Err(ConfigError::Value { key: "algorithm", message: "at least one algorithm".into() });
        }
        self.sim.validate()?;
        Ok(())
    }

    pub fn sim_for(&self, algorithm: Algorithm) -> SimConfig {
        SimConfig { algorithm, ..self.sim.clone() }
    }
}
