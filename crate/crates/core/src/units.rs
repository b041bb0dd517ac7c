//! Energy units and the lifetime/linewidth conversion.
//!
//! Every spectroscopic quantity (resonances, detunings, linewidths, couplings,
//! jitter widths) is carried as an energy in μeV. Linewidths and rates are
//! full widths at half maximum; half-width factors only appear inside the
//! reflection formulas.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in μeV·ns.
pub const HBAR_UEV_NS: f64 = 0.658_211_9;

/// FWHM of a Gaussian in units of its standard deviation, `2·sqrt(2·ln 2)`.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// An energy in μeV.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(f64);

impl Energy {
    pub const ZERO: Energy = Energy(0.0);

    pub const fn from_uev(value: f64) -> Self {
        Energy(value)
    }

    pub fn from_mev(value: f64) -> Self {
        Energy(value * 1e3)
    }

    pub const fn uev(self) -> f64 {
        self.0
    }

    pub fn mev(self) -> f64 {
        self.0 * 1e-3
    }

    pub fn abs(self) -> Self {
        Energy(self.0.abs())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ueV", self.0)
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Neg for Energy {
    type Output = Energy;
    fn neg(self) -> Energy {
        Energy(-self.0)
    }
}

impl Mul<f64> for Energy {
    type Output = Energy;
    fn mul(self, rhs: f64) -> Energy {
        Energy(self.0 * rhs)
    }
}

impl Div<f64> for Energy {
    type Output = Energy;
    fn div(self, rhs: f64) -> Energy {
        Energy(self.0 / rhs)
    }
}

/// Transform-limited linewidth `ħ/T1` for a lifetime in ns.
pub fn linewidth_from_lifetime(t1_ns: f64) -> Result<Energy> {
    if !(t1_ns > 0.0) || !t1_ns.is_finite() {
        return Err(Error::NonPositiveLifetime(t1_ns));
    }
    Ok(Energy(HBAR_UEV_NS / t1_ns))
}

/// Lifetime in ns of a transform-limited line of the given FWHM.
pub fn lifetime_from_linewidth(linewidth: Energy) -> Result<f64> {
    if !(linewidth.0 > 0.0) || !linewidth.0.is_finite() {
        return Err(Error::NonPositiveLinewidth(linewidth.0));
    }
    Ok(HBAR_UEV_NS / linewidth.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lifetime_to_linewidth_reference_values() {
        let study_qd = linewidth_from_lifetime(0.82).unwrap();
        assert!((study_qd.uev() - 0.803).abs() < 5e-4);
        let bulk = linewidth_from_lifetime(0.71).unwrap();
        assert!((bulk.uev() - 0.927).abs() < 5e-4);
    }

    #[test]
    fn lifetime_round_trip() {
        for x in [0.01, 0.3, 0.8, 5.0, 120.0] {
            let e = Energy::from_uev(x);
            let back = linewidth_from_lifetime(lifetime_from_linewidth(e).unwrap()).unwrap();
            assert_relative_eq!(back.uev(), x, max_relative = 1e-14);
        }
    }

    #[test]
    fn nonpositive_lifetime_is_rejected() {
        assert!(matches!(
            linewidth_from_lifetime(0.0),
            Err(Error::NonPositiveLifetime(_))
        ));
        assert!(linewidth_from_lifetime(-1.0).is_err());
        assert!(linewidth_from_lifetime(f64::NAN).is_err());
        assert!(lifetime_from_linewidth(Energy::ZERO).is_err());
    }

    #[test]
    fn mev_conversion() {
        assert_eq!(Energy::from_mev(4.1).uev(), 4100.0);
        assert_relative_eq!(Energy::from_uev(2700.0).mev(), 2.7);
    }
}
