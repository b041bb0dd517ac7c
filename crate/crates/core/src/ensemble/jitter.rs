//! Voigt lineshapes by direct numerical convolution and the jitter-width
//! calibration built on them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::units::{Energy, GAUSSIAN_FWHM_PER_SIGMA};

const BISECTION_STEPS: usize = 200;

fn lorentzian(x: f64, half_width: f64) -> f64 {
    half_width / (PI * (x * x + half_width * half_width))
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Area-normalized convolution of a Lorentzian (FWHM `lorentzian_fwhm`) with a
/// zero-mean Gaussian of standard deviation `sigma`, evaluated at `x`.
///
/// The convolution integral is taken by composite Simpson over ±10σ of the
/// Gaussian, with a step resolving the narrower of the two widths.
pub fn voigt_profile(x: f64, lorentzian_fwhm: f64, sigma: f64) -> f64 {
    let half_width = 0.5 * lorentzian_fwhm;
    if sigma <= 0.0 {
        return lorentzian(x, half_width);
    }
    if half_width <= 0.0 {
        return gaussian(x, sigma);
    }
    let span = 10.0 * sigma;
    let step_target = sigma.min(half_width) / 40.0;
    let mut intervals = (2.0 * span / step_target).ceil() as usize;
    intervals += intervals % 2;
    let h = 2.0 * span / intervals as f64;
    let integrand = |t: f64| gaussian(t, sigma) * lorentzian(x - t, half_width);
    let mut sum = integrand(-span) + integrand(span);
    for i in 1..intervals {
        let t = -span + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(t);
    }
    sum * h / 3.0
}

/// Full width at half maximum of [`voigt_profile`], found by bisection on the
/// half-maximum crossing.
pub fn voigt_fwhm(lorentzian_fwhm: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return lorentzian_fwhm;
    }
    let peak = voigt_profile(0.0, lorentzian_fwhm, sigma);
    let half = 0.5 * peak;
    // The Voigt FWHM never exceeds the sum of the component widths.
    let mut lo = 0.0;
    let mut hi = 0.5 * (lorentzian_fwhm + GAUSSIAN_FWHM_PER_SIGMA * sigma) * 1.01 + f64::EPSILON;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if voigt_profile(mid, lorentzian_fwhm, sigma) > half {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    lo + hi
}

/// Gaussian jitter σ that broadens a Lorentzian of FWHM `lorentzian_fwhm` to a
/// Voigt profile of FWHM `target_voigt_fwhm`.
pub fn calibrate_jitter(lorentzian_fwhm: Energy, target_voigt_fwhm: Energy) -> Result<Energy> {
    let fl = lorentzian_fwhm.uev();
    let target = target_voigt_fwhm.uev();
    if !(fl >= 0.0) || !fl.is_finite() || !target.is_finite() {
        return Err(Error::invalid(
            "lorentzian_fwhm",
            "widths must be finite and >= 0",
        ));
    }
    if target < fl || target <= 0.0 {
        return Err(Error::InfeasibleJitter {
            lorentzian: fl,
            target,
        });
    }
    if target == fl {
        return Ok(Energy::ZERO);
    }
    // The Gaussian alone may not exceed the target width.
    let mut lo = 0.0;
    let mut hi = target / GAUSSIAN_FWHM_PER_SIGMA;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if voigt_fwhm(fl, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(Energy::from_uev(0.5 * (lo + hi)))
}
