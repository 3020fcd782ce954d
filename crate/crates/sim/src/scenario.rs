//! Named fault scripts.

use core::fmt;
use core::str::FromStr;

use wsnfm_core::config::Timers;
use wsnfm_core::engine::{FaultKind, FaultSpec, FaultTarget};
use wsnfm_core::{Error, Tick};

/// Residual fraction a draining node is pushed to: just under the Low threshold.
pub const DRAIN_FRACTION: f64 = 0.19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// A common node drains below the Low threshold.
    CommonNodeEnergyExhaustion,
    /// A cell manager with a standby secondary drains below the Low threshold.
    ClusterHeadFailure,
    /// A cell manager stops without warning.
    ClusterHeadSuddenDeath,
    /// The group manager stops without warning.
    GroupManagerSuddenDeath,
    /// A cell manager with a standby secondary stops without warning; the
    /// baselines dissolve or rebuild the cluster.
    ReClustering,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::CommonNodeEnergyExhaustion,
        Scenario::ClusterHeadFailure,
        Scenario::ClusterHeadSuddenDeath,
        Scenario::GroupManagerSuddenDeath,
        Scenario::ReClustering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CommonNodeEnergyExhaustion => "common-node-energy-exhaustion",
            Scenario::ClusterHeadFailure => "cluster-head-failure",
            Scenario::ClusterHeadSuddenDeath => "cluster-head-sudden-death",
            Scenario::GroupManagerSuddenDeath => "group-manager-sudden-death",
            Scenario::ReClustering => "re-clustering",
        }
    }

    /// Mid-run: after two full reporting cycles, halfway to the third.
    pub fn default_fault_time(t: &Timers) -> Tick {
        2 * t.out_cell_period + t.out_cell_period / 2
    }

    pub fn faults(self, at: Tick) -> Vec<FaultSpec> {
        let drain = FaultKind::EnergyDrain { to_fraction: DRAIN_FRACTION };
        let (kind, target) = match self {
            Scenario::CommonNodeEnergyExhaustion => (drain, FaultTarget::CommonNode),
            Scenario::ClusterHeadFailure => (drain, FaultTarget::CellManagerWithSecondary),
            Scenario::ClusterHeadSuddenDeath => (FaultKind::SuddenDeath, FaultTarget::CellManager),
            Scenario::GroupManagerSuddenDeath => (FaultKind::SuddenDeath, FaultTarget::GroupManager),
            Scenario::ReClustering => (FaultKind::SuddenDeath, FaultTarget::CellManagerWithSecondary),
        };
        vec![FaultSpec { kind, at, target }]
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!(matches!("meteor-strike".parse::<Scenario>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scripts() {
        let at = Scenario::default_fault_time(&Timers::default());
        assert_eq!(at, 75);
        let f = Scenario::ClusterHeadFailure.faults(at);
        assert_eq!(f, vec![FaultSpec { kind: FaultKind::EnergyDrain { to_fraction: 0.19 }, at, target: FaultTarget::CellManagerWithSecondary }]);
        let f = Scenario::GroupManagerSuddenDeath.faults(at);
        assert_eq!((f.len(), f[0].kind, f[0].target), (1, FaultKind::SuddenDeath, FaultTarget::GroupManager));
        let f = Scenario::CommonNodeEnergyExhaustion.faults(at);
        assert_eq!(f[0].target, FaultTarget::CommonNode);
    }
}
