//! Single-mode cavity / dipole reflection model and the rates derived from it.
//!
//! The cavity is one-sided: the addressed top mirror carries a fraction
//! `eta_top` of the total decay `kappa`; the remainder is loss. The dipole
//! couples to the cavity field with strength `g`, decays into non-cavity modes
//! at `gamma` and dephases at `gamma_star`. With the cavity adiabatically
//! eliminated, the emission rate into the mode is
//! `Γ(ω) = 4g² / (κ (1 + (2(ω_c − ω)/κ)²))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::Energy;

/// Circular polarization channel of a Zeeman branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Circular {
    Plus,
    Minus,
}

/// Which circular transition sits at the lower energy of the Zeeman doublet.
///
/// The sign of the electron/hole g-factor decides this; the default puts the
/// σ− transition (coupled when the spin is down) at `ω_x − Δ_Z/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchOrder {
    #[default]
    SigmaMinusLower,
    SigmaPlusLower,
}

impl BranchOrder {
    pub fn flipped(self) -> Self {
        match self {
            BranchOrder::SigmaMinusLower => BranchOrder::SigmaPlusLower,
            BranchOrder::SigmaPlusLower => BranchOrder::SigmaMinusLower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavitySpec {
    omega_c: Energy,
    kappa: Energy,
    eta_top: f64,
}

impl CavitySpec {
    pub fn new(omega_c: Energy, kappa: Energy, eta_top: f64) -> Result<Self> {
        if !omega_c.is_finite() {
            return Err(Error::invalid("omega_c", "must be finite"));
        }
        if !(kappa.uev() > 0.0) || !kappa.is_finite() {
            return Err(Error::invalid("kappa", format!("must be > 0, got {kappa}")));
        }
        if !(0.0..=1.0).contains(&eta_top) {
            return Err(Error::invalid(
                "eta_top",
                format!("must lie in [0, 1], got {eta_top}"),
            ));
        }
        let spec = CavitySpec {
            omega_c,
            kappa,
            eta_top,
        };
        if !(spec.q_factor() > 0.0) {
            return Err(Error::invalid(
                "omega_c",
                "quality factor omega_c/kappa must be positive",
            ));
        }
        Ok(spec)
    }

    pub fn from_q_factor(omega_c: Energy, q_factor: f64, eta_top: f64) -> Result<Self> {
        if !(q_factor > 0.0) || !q_factor.is_finite() {
            return Err(Error::invalid(
                "q_factor",
                format!("must be > 0, got {q_factor}"),
            ));
        }
        Self::new(omega_c, omega_c / q_factor, eta_top)
    }

    pub fn omega_c(&self) -> Energy {
        self.omega_c
    }

    pub fn kappa(&self) -> Energy {
        self.kappa
    }

    pub fn eta_top(&self) -> f64 {
        self.eta_top
    }

    /// Display-only quality factor `ω_c / κ`.
    pub fn q_factor(&self) -> f64 {
        self.omega_c.uev() / self.kappa.uev()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleSpec {
    omega_x: Energy,
    delta_z: Energy,
    g: Energy,
    gamma: Energy,
    gamma_star: Energy,
    branch_order: BranchOrder,
}

impl DipoleSpec {
    pub fn new(
        omega_x: Energy,
        delta_z: Energy,
        g: Energy,
        gamma: Energy,
        gamma_star: Energy,
    ) -> Result<Self> {
        if !omega_x.is_finite() {
            return Err(Error::invalid("omega_x", "must be finite"));
        }
        for (name, value) in [
            ("delta_z", delta_z),
            ("g", g),
            ("gamma", gamma),
            ("gamma_star", gamma_star),
        ] {
            if !(value.uev() >= 0.0) || !value.is_finite() {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        Ok(DipoleSpec {
            omega_x,
            delta_z,
            g,
            gamma,
            gamma_star,
            branch_order: BranchOrder::default(),
        })
    }

    pub fn with_branch_order(mut self, order: BranchOrder) -> Self {
        self.branch_order = order;
        self
    }

    pub fn with_coupling(mut self, g: Energy) -> Result<Self> {
        if !(g.uev() >= 0.0) || !g.is_finite() {
            return Err(Error::invalid(
                "g",
                format!("must be finite and >= 0, got {g}"),
            ));
        }
        self.g = g;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: Energy) -> Result<Self> {
        if !(gamma.uev() >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(
                "gamma",
                format!("must be finite and >= 0, got {gamma}"),
            ));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_delta_z(mut self, delta_z: Energy) -> Result<Self> {
        if !(delta_z.uev() >= 0.0) || !delta_z.is_finite() {
            return Err(Error::invalid(
                "delta_z",
                format!("must be finite and >= 0, got {delta_z}"),
            ));
        }
        self.delta_z = delta_z;
        Ok(self)
    }

    pub fn omega_x(&self) -> Energy {
        self.omega_x
    }
    pub fn delta_z(&self) -> Energy {
        self.delta_z
    }
    pub fn g(&self) -> Energy {
        self.g
    }
    pub fn gamma(&self) -> Energy {
        self.gamma
    }
    pub fn gamma_star(&self) -> Energy {
        self.gamma_star
    }
    pub fn branch_order(&self) -> BranchOrder {
        self.branch_order
    }

    /// Energy of the transition driven by the given circular component.
    pub fn branch_energy(&self, channel: Circular) -> Energy {
        let half = self.delta_z * 0.5;
        let lower = match (self.branch_order, channel) {
            (BranchOrder::SigmaMinusLower, Circular::Minus) => true,
            (BranchOrder::SigmaMinusLower, Circular::Plus) => false,
            (BranchOrder::SigmaPlusLower, Circular::Plus) => true,
            (BranchOrder::SigmaPlusLower, Circular::Minus) => false,
        };
        if lower {
            self.omega_x - half
        } else {
            self.omega_x + half
        }
    }

    /// Coherence half-width `γ/2 + γ*` entering the dipole response.
    pub fn transverse_rate(&self) -> f64 {
        0.5 * self.gamma.uev() + self.gamma_star.uev()
    }
}

/// Complex field reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionAmplitude(pub Complex64);

impl ReflectionAmplitude {
    pub fn value(self) -> Complex64 {
        self.0
    }
    pub fn re(self) -> f64 {
        self.0.re
    }
    pub fn im(self) -> f64 {
        self.0.im
    }
    pub fn norm(self) -> f64 {
        self.0.norm()
    }
    pub fn arg(self) -> f64 {
        self.0.arg()
    }
}

/// Reflection evaluator for one laser frequency.
///
/// The cavity factor `i(ω_c − ω) + κ/2` is shared by every dipole detuning, so
/// ensemble averages build this once and call [`ReflectionKernel::coupled_at`]
/// per jitter offset.
#[derive(Debug, Clone, Copy)]
pub struct ReflectionKernel {
    omega: f64,
    cavity_factor: Complex64,
    top_rate: f64,
}

impl ReflectionKernel {
    pub fn new(omega: Energy, cavity: &CavitySpec) -> Self {
        let kappa = cavity.kappa.uev();
        ReflectionKernel {
            omega: omega.uev(),
            cavity_factor: Complex64::new(0.5 * kappa, cavity.omega_c.uev() - omega.uev()),
            top_rate: cavity.eta_top * kappa,
        }
    }

    /// `r₀ = 1 − η κ / (i(ω_c − ω) + κ/2)`
    #[inline]
    pub fn cold(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) - self.top_rate / self.cavity_factor
    }

    /// `r = 1 − η κ B / (B (i(ω_c − ω) + κ/2) + g²)` with `B = i(ω_t − ω) + γ/2 + γ*`.
    #[inline]
    pub fn coupled_at(&self, transition: f64, g: f64, transverse_rate: f64) -> Complex64 {
        if g == 0.0 {
            // Exact decoupling; the general form leaves rounding residue.
            return self.cold();
        }
        let b = Complex64::new(transverse_rate, transition - self.omega);
        Complex64::new(1.0, 0.0) - self.top_rate * b / (b * self.cavity_factor + g * g)
    }
}

pub fn cold_reflection(omega: Energy, cavity: &CavitySpec) -> ReflectionAmplitude {
    ReflectionAmplitude(ReflectionKernel::new(omega, cavity).cold())
}

/// Reflection seen by a circular component whose transition sits at `branch_energy`.
pub fn coupled_reflection(
    omega: Energy,
    cavity: &CavitySpec,
    branch_energy: Energy,
    dipole: &DipoleSpec,
) -> ReflectionAmplitude {
    let kernel = ReflectionKernel::new(omega, cavity);
    ReflectionAmplitude(kernel.coupled_at(
        branch_energy.uev(),
        dipole.g.uev(),
        dipole.transverse_rate(),
    ))
}

/// Lorentzian suppression `1 / (1 + (2(ω_c − ω)/κ)²)` of the cavity-mediated rate.
pub fn dispersive_suppression(omega: Energy, cavity: &CavitySpec) -> f64 {
    let x = 2.0 * (cavity.omega_c.uev() - omega.uev()) / cavity.kappa.uev();
    1.0 / (1.0 + x * x)
}

/// Cavity-mediated emission rate Γ(ω) (FWHM, μeV).
pub fn purcell_rate(omega: Energy, cavity: &CavitySpec, g: Energy) -> Energy {
    let g = g.uev();
    Energy::from_uev(4.0 * g * g / cavity.kappa.uev() * dispersive_suppression(omega, cavity))
}

/// Coupling `g` that yields the rate `rate` at frequency `omega`; inverse of [`purcell_rate`].
pub fn coupling_for_rate(rate: Energy, omega: Energy, cavity: &CavitySpec) -> Result<Energy> {
    if !(rate.uev() >= 0.0) || !rate.is_finite() {
        return Err(Error::invalid(
            "rate",
            format!("must be finite and >= 0, got {rate}"),
        ));
    }
    let g2 = rate.uev() * cavity.kappa.uev() / (4.0 * dispersive_suppression(omega, cavity));
    Ok(Energy::from_uev(g2.sqrt()))
}

/// `β = Γ / (Γ + γ + γ*)`.
pub fn beta_factor(rate: Energy, gamma: Energy, gamma_star: Energy) -> Result<f64> {
    let (a, b, c) = (rate.uev(), gamma.uev(), gamma_star.uev());
    if a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::invalid("rates", "rates must be >= 0"));
    }
    let total = a + b + c;
    if !(total > 0.0) {
        return Err(Error::UndefinedBeta);
    }
    Ok(a / total)
}

/// Geometric model for light escaping through the pillar sidewall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideEscapeGeometry {
    /// Every ray within `θ_c` of the horizontal plane escapes: fraction `sin θ_c`.
    EquatorialBand,
    /// A ray must be within `θ_c` of the wall normal both in elevation and in
    /// azimuth (planar facets): fraction `sin θ_c · 2θ_c/π`.
    DoubleConeProduct,
}

/// Fraction of 4π sr that leaves through the sidewall below the critical angle.
pub fn solid_angle_fraction(n_index: f64, geometry: SideEscapeGeometry) -> Result<f64> {
    if !(n_index >= 1.0) || !n_index.is_finite() {
        return Err(Error::IndexBelowOne(n_index));
    }
    let sin_c = 1.0 / n_index;
    let theta_c = sin_c.asin();
    Ok(match geometry {
        SideEscapeGeometry::EquatorialBand => sin_c,
        SideEscapeGeometry::DoubleConeProduct => sin_c * 2.0 * theta_c / PI,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cavity(eta: f64) -> CavitySpec {
        CavitySpec::new(Energy::from_mev(1388.0), Energy::from_uev(4100.0), eta).unwrap()
    }

    fn dipole(g: f64, gamma: f64, gamma_star: f64) -> DipoleSpec {
        DipoleSpec::new(
            Energy::from_mev(1385.3),
            Energy::from_uev(1.0),
            Energy::from_uev(g),
            Energy::from_uev(gamma),
            Energy::from_uev(gamma_star),
        )
        .unwrap()
    }

    #[test]
    fn cold_reflection_limits() {
        let c = cavity(1.0);
        let r = cold_reflection(c.omega_c(), &c);
        assert_relative_eq!(r.re(), -1.0, epsilon = 1e-15);
        assert_relative_eq!(r.im(), 0.0, epsilon = 1e-15);

        let far = cold_reflection(c.omega_c() + Energy::from_uev(1e12), &c);
        assert_relative_eq!(far.re(), 1.0, epsilon = 1e-8);
        assert!(far.im().abs() < 1e-8);

        // 1 - 2/(1 - i) = -i
        let half = cold_reflection(c.omega_c() + c.kappa() * 0.5, &c);
        assert_relative_eq!(half.re(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(half.im(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn decoupled_dipole_is_cold_cavity() {
        let c = cavity(0.9);
        let d = dipole(0.0, 0.3, 0.1);
        for k in -20..=20 {
            let w = d.omega_x() + Energy::from_uev(0.37 * k as f64);
            let r = coupled_reflection(w, &c, d.omega_x(), &d);
            let r0 = cold_reflection(w, &c);
            assert_eq!(r, r0);
        }
    }

    #[test]
    fn dipole_induced_transparency_on_resonance() {
        let c = cavity(1.0);
        let d = DipoleSpec::new(
            c.omega_c(),
            Energy::ZERO,
            Energy::from_uev(20.0),
            Energy::ZERO,
            Energy::ZERO,
        )
        .unwrap();
        let r = coupled_reflection(c.omega_c(), &c, c.omega_c(), &d);
        assert_relative_eq!(r.re(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.im(), 0.0, epsilon = 1e-15);
    }

    // Values frozen from a direct complex evaluation of the reflection formula
    // (independent script): κ = 4100, ω_c − ω_x = 2700, Γ(ω_x) = 0.52, γ = 0.28, η = 0.9.
    #[test]
    fn coupled_reflection_at_study_dot() {
        let c = cavity(0.9);
        let omega_x = Energy::from_mev(1385.3);
        let g = coupling_for_rate(Energy::from_uev(0.52), omega_x, &c).unwrap();
        let d = dipole(g.uev(), 0.28, 0.0);
        let r = coupled_reflection(omega_x, &c, omega_x, &d);
        assert_relative_eq!(r.re(), 0.717_161_926_905_285_6, epsilon = 1e-9);
        assert_relative_eq!(r.im(), 0.061_282_636_964_851_3, epsilon = 1e-9);
        let r0 = cold_reflection(omega_x, &c);
        assert_relative_eq!(r0.re(), 0.341_788_122_688_710_06, epsilon = 1e-9);
        assert_relative_eq!(r0.im(), 0.866_913_204_263_650_3, epsilon = 1e-9);
    }

    #[test]
    fn purcell_rate_values() {
        let c = cavity(0.9);
        let g = Energy::from_uev(38.2);
        let on = purcell_rate(c.omega_c(), &c, g);
        assert_eq!(on.uev(), 4.0 * 38.2 * 38.2 / 4100.0);

        let detuned = c.omega_c() - Energy::from_uev(2700.0);
        let s = dispersive_suppression(detuned, &c);
        assert_relative_eq!(
            s,
            1.0 / (1.0 + (5400.0f64 / 4100.0).powi(2)),
            max_relative = 1e-12
        );
        assert!((s - 0.3657).abs() < 1e-4);
        let rate = purcell_rate(detuned, &c, g);
        assert!((rate.uev() - 0.52).abs() < 0.005, "{rate}");

        let back = coupling_for_rate(rate, detuned, &c).unwrap();
        assert_relative_eq!(back.uev(), 38.2, max_relative = 1e-12);
    }

    #[test]
    fn purcell_rate_is_symmetric() {
        let c = cavity(0.9);
        let g = Energy::from_uev(17.0);
        for k in 0..50 {
            let delta = Energy::from_uev(k as f64 * 113.0);
            let a = purcell_rate(c.omega_c() + delta, &c, g);
            let b = purcell_rate(c.omega_c() - delta, &c, g);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn beta_factor_values() {
        let b = beta_factor(Energy::from_uev(0.52), Energy::from_uev(0.28), Energy::ZERO).unwrap();
        assert!((b - 0.65).abs() < 1e-12);
        let one = beta_factor(Energy::from_uev(3.3), Energy::ZERO, Energy::ZERO).unwrap();
        assert_eq!(one, 1.0);
        let resonant =
            beta_factor(Energy::from_uev(1.42), Energy::from_uev(0.25), Energy::ZERO).unwrap();
        assert!((resonant - 0.85).abs() < 0.001);
        assert!(matches!(
            beta_factor(Energy::ZERO, Energy::ZERO, Energy::ZERO),
            Err(Error::UndefinedBeta)
        ));
    }

    #[test]
    fn solid_angle_models() {
        assert_eq!(
            solid_angle_fraction(1.0, SideEscapeGeometry::EquatorialBand).unwrap(),
            1.0
        );
        assert_relative_eq!(
            solid_angle_fraction(1.0, SideEscapeGeometry::DoubleConeProduct).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let band = solid_angle_fraction(3.5, SideEscapeGeometry::EquatorialBand).unwrap();
        assert!((band - 0.2857).abs() < 1e-4);
        let product = solid_angle_fraction(3.5, SideEscapeGeometry::DoubleConeProduct).unwrap();
        assert!(product > 0.0 && product < band);
        assert!(matches!(
            solid_angle_fraction(0.9, SideEscapeGeometry::EquatorialBand),
            Err(Error::IndexBelowOne(_))
        ));
    }

    #[test]
    fn band_fraction_matches_numerical_sphere_integral() {
        // Integrate cos(latitude) over |latitude| < θ_c by the midpoint rule.
        let n = 3.5_f64;
        let theta_c = (1.0 / n).asin();
        let steps = 20_000;
        let h = 2.0 * theta_c / steps as f64;
        let area: f64 = (0..steps)
            .map(|i| (-theta_c + (i as f64 + 0.5) * h).cos() * h * 2.0 * PI)
            .sum();
        let fraction = area / (4.0 * PI);
        let model = solid_angle_fraction(n, SideEscapeGeometry::EquatorialBand).unwrap();
        assert_relative_eq!(fraction, model, max_relative = 1e-8);
    }

    #[test]
    fn spec_validation() {
        assert!(CavitySpec::new(Energy::from_mev(1388.0), Energy::ZERO, 0.9).is_err());
        assert!(CavitySpec::new(Energy::from_mev(1388.0), Energy::from_uev(1.0), 1.1).is_err());
        let q = CavitySpec::from_q_factor(Energy::from_mev(1388.0), 290.0, 0.9).unwrap();
        assert_relative_eq!(q.q_factor(), 290.0, max_relative = 1e-12);
        assert!(DipoleSpec::new(
            Energy::ZERO,
            Energy::ZERO,
            Energy::from_uev(-1.0),
            Energy::ZERO,
            Energy::ZERO
        )
        .is_err());
    }

    #[test]
    fn branch_energies_follow_order() {
        let d = dipole(1.0, 0.1, 0.0);
        assert_eq!(
            d.branch_energy(Circular::Minus),
            d.omega_x() - Energy::from_uev(0.5)
        );
        assert_eq!(
            d.branch_energy(Circular::Plus),
            d.omega_x() + Energy::from_uev(0.5)
        );
        let f = d.with_branch_order(BranchOrder::SigmaPlusLower);
        assert_eq!(
            f.branch_energy(Circular::Plus),
            d.omega_x() - Energy::from_uev(0.5)
        );
    }
}
