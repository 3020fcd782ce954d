//! Run parameters shared by the protocol, the baselines and the engine.

use core::fmt;
use core::str::FromStr;

use crate::energy::{RadioParams, Thresholds};
use crate::error::{invalid, Error, Result};
use crate::ids::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Cellular,
    Venkataraman,
    Lbc,
    Aso,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Cellular, Algorithm::Venkataraman, Algorithm::Lbc, Algorithm::Aso];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cellular => "cellular",
            Algorithm::Venkataraman => "venkataraman",
            Algorithm::Lbc => "lbc",
            Algorithm::Aso => "aso",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid("algorithm must be one of cellular, venkataraman, lbc, aso"))
    }
}

/// Protocol periods, all in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timers {
    pub energy_check_period: Tick,
    pub in_cell_period: Tick,
    pub out_cell_period: Tick,
    pub query_timeout: Tick,
}

impl Default for Timers {
    fn default() -> Self {
        Self { energy_check_period: 1, in_cell_period: 10, out_cell_period: 30, query_timeout: 2 }
    }
}

impl Timers {
    /// A query must be able to make the round trip before its deadline.
    pub fn validate(&self, latency: Tick) -> Result<()> {
        if self.energy_check_period == 0 || self.in_cell_period == 0 || self.query_timeout == 0 {
            return Err(invalid("timer periods must be > 0"));
        }
        if self.out_cell_period <= self.in_cell_period {
            return Err(invalid("out_cell_period must exceed in_cell_period"));
        }
        if self.query_timeout < 2 * latency {
            return Err(invalid("query_timeout must be at least twice the latency"));
        }
        if self.query_timeout >= self.in_cell_period {
            return Err(invalid("query_timeout must be shorter than in_cell_period"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeliveryModel {
    /// Ticks per hop.
    pub latency: Tick,
    pub loss_probability: f64,
}

impl Default for DeliveryModel {
    fn default() -> Self {
        Self { latency: 1, loss_probability: 0.0 }
    }
}

impl DeliveryModel {
    pub fn validate(&self) -> Result<()> {
        if self.latency == 0 {
            return Err(invalid("latency must be >= 1 tick"));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(invalid("loss probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// How a cell manager polls its members.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GetMode {
    /// One multicast Get per round.
    Broadcast,
    /// One Get per expected member.
    Unicast,
}

/// What a group manager does about a cell reporting Low health.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProactivePolicy {
    Rate { multiplier: u32 },
    Merge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub area_width: f64,
    pub area_height: f64,
    pub cell_side: f64,
    pub group_dim: u32,
    pub initial_energy: f64,
    pub radio: RadioParams,
    pub thresholds: Thresholds,
    pub timers: Timers,
    pub delivery: DeliveryModel,
    /// Neighbour radius used by the tree-based baselines and by flooding.
    pub radio_range: f64,
    /// Constant drain per tick for every active node, mJ.
    pub idle_drain: f64,
    /// Wake sleepers when a cell has fewer active nodes than this.
    pub min_cell_density: usize,
    pub get_mode: GetMode,
    pub proactive: ProactivePolicy,
    /// Re-broadcast announcements and declarations once within radio range.
    pub flood: bool,
    pub max_ticks: Tick,
    /// Quiet out-cell periods before a run is considered finished.
    pub quiescence_periods: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Cellular,
            area_width: 120.0,
            area_height: 120.0,
            cell_side: 30.0,
            group_dim: 2,
            initial_energy: 2000.0,
            radio: RadioParams::default(),
            thresholds: Thresholds::default(),
            timers: Timers::default(),
            delivery: DeliveryModel::default(),
            radio_range: 30.0,
            idle_drain: 0.0,
            min_cell_density: 0,
            get_mode: GetMode::Broadcast,
            proactive: ProactivePolicy::Rate { multiplier: 2 },
            flood: false,
            max_ticks: 2000,
            quiescence_periods: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for v in [self.area_width, self.area_height, self.cell_side, self.radio_range] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid("area, cell side and radio range must be > 0"));
            }
        }
        if self.group_dim < 1 {
            return Err(invalid("group_dim must be >= 1"));
        }
        if !(self.initial_energy.is_finite() && self.initial_energy > 0.0) {
            return Err(invalid("initial energy must be > 0"));
        }
        if !(self.idle_drain.is_finite() && self.idle_drain >= 0.0) {
            return Err(invalid("idle drain must be >= 0"));
        }
        if let ProactivePolicy::Rate { multiplier } = self.proactive {
            if multiplier < 1 {
                return Err(invalid("rate multiplier must be >= 1"));
            }
        }
        self.radio.validate()?;
        self.thresholds.validate()?;
        self.delivery.validate()?;
        self.timers.validate(self.delivery.latency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("leach".parse::<Algorithm>().is_err());
    }

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn timer_ordering_enforced() {
        let mut t = Timers::default();
        t.out_cell_period = t.in_cell_period;
        assert!(t.validate(1).is_err());
        assert!(Timers::default().validate(2).is_err());
        let mut c = SimConfig::default();
        c.delivery.loss_probability = 1.5;
        assert!(c.validate().is_err());
    }
}
