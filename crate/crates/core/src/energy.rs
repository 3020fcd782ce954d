//! Battery accounting, the first-order radio model and energy grading.
//!
//! All energies are in millijoules. Radio constants are given in the units
//! the literature uses (nJ/bit, pJ/bit/m²) and converted here.

use crate::error::{invalid, Error, Result};

/// First-order radio model constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioParams {
    /// Electronics cost, nJ per bit, paid by both transmitter and receiver.
    pub elec_nj_per_bit: f64,
    /// Amplifier cost, pJ per bit per m², paid by the transmitter.
    pub amp_pj_per_bit_m2: f64,
    /// Size of every protocol message, in bits.
    pub message_bits: u64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            elec_nj_per_bit: 50.0,
            amp_pj_per_bit_m2: 100.0,
            message_bits: 2000,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.elec_nj_per_bit) || !positive(self.amp_pj_per_bit_m2) || self.message_bits == 0 {
            return Err(invalid("radio parameters must all be > 0"));
        }
        Ok(())
    }
}

const NJ_TO_MJ: f64 = 1e-6;
const PJ_TO_MJ: f64 = 1e-9;

/// Transmit cost in mJ: `elec·bits + amp·bits·d²`.
pub fn tx_cost(params: &RadioParams, bits: u64, distance: f64) -> Result<f64> {
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(invalid("distance must be finite and >= 0"));
    }
    tx_cost_sq(params, bits, distance * distance)
}

/// [`tx_cost`] taking the squared distance, which avoids a square root.
pub fn tx_cost_sq(params: &RadioParams, bits: u64, distance_sq: f64) -> Result<f64> {
    if !(distance_sq.is_finite() && distance_sq >= 0.0) {
        return Err(invalid("distance must be finite and >= 0"));
    }
    let bits = bits as f64;
    Ok(params.elec_nj_per_bit * NJ_TO_MJ * bits + params.amp_pj_per_bit_m2 * PJ_TO_MJ * bits * distance_sq)
}

/// Receive cost in mJ: `elec·bits`.
pub fn rx_cost(params: &RadioParams, bits: u64) -> f64 {
    params.elec_nj_per_bit * NJ_TO_MJ * bits as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Battery {
    initial: f64,
    residual: f64,
}

impl Battery {
    pub fn new(initial: f64) -> Result<Self> {
        if !(initial.is_finite() && initial >= 0.0) {
            return Err(invalid("initial energy must be finite and >= 0"));
        }
        Ok(Self { initial, residual: initial })
    }

    pub fn with_residual(initial: f64, residual: f64) -> Result<Self> {
        let b = Self::new(initial)?;
        if !(residual.is_finite() && (0.0..=initial).contains(&residual)) {
            return Err(invalid("residual must lie in [0, initial]"));
        }
        Ok(Self { residual, ..b })
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Residual as a fraction of the initial charge; `None` for an empty-rated battery.
    pub fn fraction(&self) -> Option<f64> {
        (self.initial > 0.0).then(|| self.residual / self.initial)
    }

    pub fn is_depleted(&self) -> bool {
        self.residual <= 0.0
    }

    /// Saturating discharge. Negative amounts are ignored.
    #[must_use]
    pub fn drain(self, amount: f64) -> Battery {
        let amount = if amount > 0.0 { amount } else { 0.0 };
        let residual = if amount >= self.residual { 0.0 } else { self.residual - amount };
        Battery { residual, ..self }
    }
}

/// Free-function form of [`Battery::drain`].
pub fn drain(battery: Battery, amount: f64) -> Battery {
    battery.drain(amount)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnergyRank {
    Low,
    Medium,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HealthStatus {
    High,
    Medium,
    Low,
}

impl HealthStatus {
    /// 0 is best. Used for "best health" selection.
    pub fn badness(self) -> u8 {
        match self {
            HealthStatus::High => 0,
            HealthStatus::Medium => 1,
            HealthStatus::Low => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HealthStatus::High => "high",
            HealthStatus::Medium => "medium",
            HealthStatus::Low => "low",
        }
    }
}

/// Low and high rank boundaries as fractions of the initial charge. Both
/// boundaries are inclusive: `f <= low` is Low, `f >= high` is High.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { low: 0.20, high: 0.50 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(invalid("thresholds must satisfy 0 < low < high <= 1"));
        }
        Ok(())
    }

    pub fn rank_of_fraction(&self, fraction: f64) -> EnergyRank {
        if fraction <= self.low {
            EnergyRank::Low
        } else if fraction >= self.high {
            EnergyRank::High
        } else {
            EnergyRank::Medium
        }
    }

    pub fn health_of_fraction(&self, fraction: f64) -> HealthStatus {
        match self.rank_of_fraction(fraction) {
            EnergyRank::Low => HealthStatus::Low,
            EnergyRank::Medium => HealthStatus::Medium,
            EnergyRank::High => HealthStatus::High,
        }
    }
}

pub fn classify_rank(battery: &Battery, thresholds: &Thresholds) -> Result<EnergyRank> {
    let fraction = battery
        .fraction()
        .ok_or_else(|| invalid("battery with zero initial energy cannot be ranked"))?;
    Ok(thresholds.rank_of_fraction(fraction))
}

/// Cell health: the mean member charge fraction graded through the rank thresholds.
pub fn cell_health(members: &[Battery], thresholds: &Thresholds) -> Result<HealthStatus> {
    if members.is_empty() {
        return Err(Error::NoData("cell has no members"));
    }
    let mut sum = 0.0;
    for b in members {
        sum += b
            .fraction()
            .ok_or_else(|| invalid("battery with zero initial energy cannot be graded"))?;
    }
    Ok(thresholds.health_of_fraction(sum / members.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn tx_cost_examples() {
        let p = RadioParams::default();
        assert_eq!(tx_cost(&p, 0, 10.0).unwrap(), 0.0);
        // 50e-9 J/bit * 2000 + 100e-12 J/bit/m^2 * 2000 * 100 m^2 = 1.2e-4 J
        assert!(close(tx_cost(&p, 2000, 10.0).unwrap(), 0.12));
        assert!(close(tx_cost(&p, 2000, 0.0).unwrap(), 0.1));
        assert!(tx_cost(&p, 2000, -1.0).is_err());
        assert!(tx_cost(&p, 2000, f64::NAN).is_err());
    }

    #[test]
    fn rx_cost_examples() {
        let p = RadioParams::default();
        assert_eq!(rx_cost(&p, 0), 0.0);
        assert!(close(rx_cost(&p, 2000), 0.1));
        assert_eq!(rx_cost(&p, 2000), tx_cost(&p, 2000, 0.0).unwrap());
    }

    #[test]
    fn drain_saturates() {
        let b = Battery::new(2000.0).unwrap().drain(0.12);
        assert!(close(b.residual(), 1999.88));
        let low = Battery::with_residual(2000.0, 0.05).unwrap().drain(0.12);
        assert_eq!(low.residual(), 0.0);
        assert!(low.is_depleted());
        let same = Battery::with_residual(2000.0, 700.0).unwrap();
        assert_eq!(same.drain(0.0), same);
    }

    #[test]
    fn rank_boundaries_are_inclusive() {
        let th = Thresholds::default();
        let rank = |r| classify_rank(&Battery::with_residual(2000.0, r).unwrap(), &th).unwrap();
        assert_eq!(rank(400.0), EnergyRank::Low);
        assert_eq!(rank(401.0), EnergyRank::Medium);
        assert_eq!(rank(600.0), EnergyRank::Medium);
        assert_eq!(rank(1000.0), EnergyRank::High);
        assert_eq!(rank(999.0), EnergyRank::Medium);
        assert!(classify_rank(&Battery::new(0.0).unwrap(), &th).is_err());
    }

    #[test]
    fn health_is_mean_fraction() {
        let th = Thresholds::default();
        let at = |f: f64| Battery::with_residual(2000.0, 2000.0 * f).unwrap();
        assert_eq!(cell_health(&[at(1.0), at(1.0)], &th).unwrap(), HealthStatus::High);
        assert_eq!(cell_health(&[at(0.1), at(0.1)], &th).unwrap(), HealthStatus::Low);
        // (0.10 + 0.60) / 2 = 0.35
        assert_eq!(cell_health(&[at(0.1), at(0.6)], &th).unwrap(), HealthStatus::Medium);
        assert_eq!(cell_health(&[], &th), Err(Error::NoData("cell has no members")));
    }
}
