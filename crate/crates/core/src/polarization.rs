//! Jones-vector scattering of linearly polarized light off the spin-selective
//! circular channels, and the polarimetric estimators applied to H/V/D/A counts.
//!
//! Basis convention: `|σ±⟩ = (|H⟩ ± i|V⟩)/√2`, `|D⟩ = (|H⟩ + |V⟩)/√2`,
//! `|A⟩ = (|H⟩ − |V⟩)/√2`. Every sign-sensitive output follows from it; in
//! particular `d − a = −Im(r₋ r̄₊)` for a vertically polarized input.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qed::ReflectionAmplitude;

/// Largest `|sin φ|` accepted as numerical noise before it counts as inconsistent data.
pub const SATURATION_TOLERANCE: f64 = 1e-6;

/// Field amplitudes in the H/V basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub h: Complex64,
    pub v: Complex64,
}

impl JonesVector {
    pub fn new(h: Complex64, v: Complex64) -> Self {
        JonesVector { h, v }
    }

    pub fn horizontal() -> Self {
        JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        JonesVector::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        JonesVector::new(self.h * factor, self.v * factor)
    }
}

/// Time-averaged intensities in the four linear detection bases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarizationCounts {
    pub h: f64,
    pub v: f64,
    pub d: f64,
    pub a: f64,
}

impl PolarizationCounts {
    pub fn new(h: f64, v: f64, d: f64, a: f64) -> Self {
        PolarizationCounts { h, v, d, a }
    }

    pub fn total(&self) -> f64 {
        self.h + self.v
    }

    /// Checks `h + v = d + a` to a relative tolerance.
    pub fn is_consistent(&self, rel_tol: f64) -> bool {
        (self.h + self.v - self.d - self.a).abs()
            <= rel_tol * (self.h + self.v).max(f64::MIN_POSITIVE)
    }

    pub fn channels(&self) -> [f64; 4] {
        [self.h, self.v, self.d, self.a]
    }

    pub(crate) fn accumulate(&mut self, other: &PolarizationCounts, weight: f64) {
        self.h += weight * other.h;
        self.v += weight * other.v;
        self.d += weight * other.d;
        self.a += weight * other.a;
    }
}

/// Output of the diagonal-basis phase estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    /// Relative phase between circular components, rad, in `[−π/2, π/2]`.
    pub phi: f64,
    /// Kerr rotation `φ/2`, rad.
    pub phi_r: f64,
    /// The raw ratio exceeded 1 within tolerance and was clamped.
    pub saturated: bool,
}

impl PhaseResult {
    fn from_phi(phi: f64, saturated: bool) -> Self {
        PhaseResult {
            phi,
            phi_r: phi / 2.0,
            saturated,
        }
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }

    pub fn phi_r_deg(&self) -> f64 {
        self.phi_r.to_degrees()
    }
}

/// Scatters a unit `|V⟩` input whose σ+ and σ− parts reflect with `r_plus` and `r_minus`.
///
/// `|V⟩ = i(|σ−⟩ − |σ+⟩)/√2`, so the output is
/// `a_h = i(r₋ − r₊)/2`, `a_v = (r₋ + r₊)/2`.
pub fn scatter_linear_v(r_plus: ReflectionAmplitude, r_minus: ReflectionAmplitude) -> JonesVector {
    scatter_v(r_plus.value(), r_minus.value())
}

#[inline]
pub(crate) fn scatter_v(r_plus: Complex64, r_minus: Complex64) -> JonesVector {
    let diff = r_minus - r_plus;
    JonesVector {
        h: Complex64::new(-0.5 * diff.im, 0.5 * diff.re),
        v: 0.5 * (r_minus + r_plus),
    }
}

#[inline]
pub fn counts_from_jones(j: &JonesVector) -> PolarizationCounts {
    let plus = j.h + j.v;
    let minus = j.h - j.v;
    PolarizationCounts {
        h: j.h.norm_sqr(),
        v: j.v.norm_sqr(),
        d: 0.5 * plus.norm_sqr(),
        a: 0.5 * minus.norm_sqr(),
    }
}

/// `sin φ = (D − A) / (2√(HV))`.
pub fn phase_from_counts(c: &PolarizationCounts) -> Result<PhaseResult> {
    if !(c.h > 0.0) || !(c.v > 0.0) {
        return Err(Error::EstimatorUndefined { h: c.h, v: c.v });
    }
    let ratio = (c.d - c.a) / (2.0 * (c.h * c.v).sqrt());
    if !ratio.is_finite() {
        return Err(Error::InconsistentCounts { ratio });
    }
    let magnitude = ratio.abs();
    if magnitude <= 1.0 {
        Ok(PhaseResult::from_phi(ratio.asin(), false))
    } else if magnitude <= 1.0 + SATURATION_TOLERANCE {
        Ok(PhaseResult::from_phi(FRAC_PI_2.copysign(ratio), true))
    } else {
        Err(Error::InconsistentCounts { ratio })
    }
}

/// Major-axis orientation `ψ = ½ atan2(D − A, H − V)` relative to H, in `(−π/2, π/2]`.
pub fn rotation_angle(c: &PolarizationCounts) -> Result<f64> {
    let s1 = c.h - c.v;
    let s2 = c.d - c.a;
    if s1 == 0.0 && s2 == 0.0 {
        return Err(Error::UndefinedOrientation);
    }
    Ok(0.5 * s2.atan2(s1))
}
