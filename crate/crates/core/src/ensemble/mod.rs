//! Averaging over quasi-static Gaussian spectral jitter and a thermal spin
//! ensemble.
//!
//! For spin down only the σ− transition scatters and σ+ sees the bare cavity;
//! for spin up the roles swap. A jitter offset δ shifts both Zeeman branches
//! together. Counts are averaged over δ ~ N(0, σ²) either by Gauss–Hermite
//! quadrature ([`averaged_counts`]) or by seeded Monte Carlo
//! ([`averaged_counts_mc`]), the latter serving as an independent check.

mod jitter;

pub use jitter::{calibrate_jitter, voigt_fwhm, voigt_profile};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::polarization::{
    counts_from_jones, phase_from_counts, scatter_v, PhaseResult, PolarizationCounts,
};
use crate::qed::{CavitySpec, Circular, DipoleSpec, ReflectionKernel};
use crate::quadrature::GaussHermite;
use crate::units::Energy;

pub const DEFAULT_QUADRATURE_ORDER: usize = 2048;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    sigma: Energy,
    quadrature_order: usize,
    mc_samples: usize,
    seed: u64,
}

impl JitterSpec {
    pub fn new(
        sigma: Energy,
        quadrature_order: usize,
        mc_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(sigma.uev() >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(
                "sigma",
                format!("must be finite and >= 0, got {sigma}"),
            ));
        }
        if quadrature_order == 0 {
            return Err(Error::invalid("quadrature_order", "must be >= 1"));
        }
        if mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be >= 1"));
        }
        Ok(JitterSpec {
            sigma,
            quadrature_order,
            mc_samples,
            seed,
        })
    }

    /// Default quadrature order and sample count with the given width and seed.
    pub fn with_sigma(sigma: Energy, seed: u64) -> Result<Self> {
        Self::new(sigma, DEFAULT_QUADRATURE_ORDER, DEFAULT_MC_SAMPLES, seed)
    }

    pub fn sigma(&self) -> Energy {
        self.sigma
    }
    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }
    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_quadrature_order(mut self, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("quadrature_order", "must be >= 1"));
        }
        self.quadrature_order = order;
        Ok(self)
    }

    pub fn with_mc_samples(mut self, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::invalid("mc_samples", "must be >= 1"));
        }
        self.mc_samples = samples;
        Ok(self)
    }
}

/// Occupation of the resident electron spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinEnsemble {
    p_up: f64,
}

impl SpinEnsemble {
    pub fn new(p_up: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_up) {
            return Err(Error::invalid(
                "p_up",
                format!("must lie in [0, 1], got {p_up}"),
            ));
        }
        Ok(SpinEnsemble { p_up })
    }

    pub fn thermal() -> Self {
        SpinEnsemble { p_up: 0.5 }
    }

    pub fn down() -> Self {
        SpinEnsemble { p_up: 0.0 }
    }

    pub fn up() -> Self {
        SpinEnsemble { p_up: 1.0 }
    }

    pub fn p_up(&self) -> f64 {
        self.p_up
    }

    pub fn p_down(&self) -> f64 {
        1.0 - self.p_up
    }

    pub fn swapped(&self) -> Self {
        SpinEnsemble {
            p_up: 1.0 - self.p_up,
        }
    }
}

/// Evenly spaced laser energies, endpoints included, laid out as offsets
/// from an origin so detunings come back exactly as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    origin: Energy,
    from: Energy,
    to: Energy,
    points: usize,
}

impl ScanGrid {
    pub fn new(start: Energy, stop: Energy, points: usize) -> Result<Self> {
        Self::around(Energy::ZERO, start, stop, points)
    }

    /// Grid of `points` energies spanning `[center + from, center + to]`.
    pub fn around(center: Energy, from: Energy, to: Energy, points: usize) -> Result<Self> {
        if !center.is_finite() || !from.is_finite() || !to.is_finite() {
            return Err(Error::invalid("scan", "energies must be finite"));
        }
        if !(to.uev() > from.uev()) {
            return Err(Error::invalid("scan", "stop must be greater than start"));
        }
        if points < 2 {
            return Err(Error::invalid("scan", "at least 2 points are required"));
        }
        Ok(ScanGrid {
            origin: center,
            from,
            to,
            points,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn origin(&self) -> Energy {
        self.origin
    }

    /// Detuning of point `index` from the origin.
    pub fn offset(&self, index: usize) -> Energy {
        let span = self.to.uev() - self.from.uev();
        let step = span / (self.points - 1) as f64;
        if index + 1 == self.points {
            self.to
        } else {
            Energy::from_uev(self.from.uev() + step * index as f64)
        }
    }

    pub fn energy(&self, index: usize) -> Energy {
        self.origin + self.offset(index)
    }

    pub fn offsets(&self) -> Vec<Energy> {
        (0..self.points).map(|i| self.offset(i)).collect()
    }

    pub fn energies(&self) -> Vec<Energy> {
        (0..self.points).map(|i| self.energy(i)).collect()
    }
}

/// Everything needed to predict averaged counts at a laser energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringModel {
    pub cavity: CavitySpec,
    pub dipole: DipoleSpec,
    pub jitter: JitterSpec,
    pub spins: SpinEnsemble,
}

impl ScatteringModel {
    pub fn new(
        cavity: CavitySpec,
        dipole: DipoleSpec,
        jitter: JitterSpec,
        spins: SpinEnsemble,
    ) -> Self {
        ScatteringModel {
            cavity,
            dipole,
            jitter,
            spins,
        }
    }
}

/// Counts for one spin configuration and one jitter offset, weighted by spin occupation.
struct SpinResolved {
    kernel: ReflectionKernel,
    cold: num_complex::Complex64,
    g: f64,
    transverse: f64,
    minus_branch: f64,
    plus_branch: f64,
    p_up: f64,
    p_down: f64,
}

impl SpinResolved {
    fn new(omega: Energy, model: &ScatteringModel) -> Self {
        let kernel = ReflectionKernel::new(omega, &model.cavity);
        SpinResolved {
            kernel,
            cold: kernel.cold(),
            g: model.dipole.g().uev(),
            transverse: model.dipole.transverse_rate(),
            minus_branch: model.dipole.branch_energy(Circular::Minus).uev(),
            plus_branch: model.dipole.branch_energy(Circular::Plus).uev(),
            p_up: model.spins.p_up(),
            p_down: model.spins.p_down(),
        }
    }

    /// Spin down: σ− couples. Spin up: σ+ couples.
    #[inline]
    fn spin_down(&self, offset: f64) -> PolarizationCounts {
        let r_minus = self
            .kernel
            .coupled_at(self.minus_branch + offset, self.g, self.transverse);
        counts_from_jones(&scatter_v(self.cold, r_minus))
    }

    #[inline]
    fn spin_up(&self, offset: f64) -> PolarizationCounts {
        let r_plus = self
            .kernel
            .coupled_at(self.plus_branch + offset, self.g, self.transverse);
        counts_from_jones(&scatter_v(r_plus, self.cold))
    }

    #[inline]
    fn mixed(&self, offset: f64) -> PolarizationCounts {
        let mut out = PolarizationCounts::default();
        if self.p_down > 0.0 {
            out.accumulate(&self.spin_down(offset), self.p_down);
        }
        if self.p_up > 0.0 {
            out.accumulate(&self.spin_up(offset), self.p_up);
        }
        out
    }
}

/// Jitter- and spin-averaged counts at laser energy `omega`, by Gauss–Hermite quadrature.
pub fn averaged_counts(omega: Energy, model: &ScatteringModel) -> Result<PolarizationCounts> {
    let nodes = quadrature_nodes(&model.jitter)?;
    Ok(averaged_counts_on(omega, model, &nodes))
}

fn quadrature_nodes(jitter: &JitterSpec) -> Result<Vec<(f64, f64)>> {
    let sigma = jitter.sigma.uev();
    if sigma == 0.0 {
        return Ok(vec![(0.0, 1.0)]);
    }
    Ok(GaussHermite::cached(jitter.quadrature_order)?.normal_points(sigma))
}

fn averaged_counts_on(
    omega: Energy,
    model: &ScatteringModel,
    nodes: &[(f64, f64)],
) -> PolarizationCounts {
    let resolved = SpinResolved::new(omega, model);
    let mut total = PolarizationCounts::default();
    for &(offset, weight) in nodes {
        total.accumulate(&resolved.mixed(offset), weight);
    }
    total
}

/// Monte-Carlo estimate with per-channel standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub counts: PolarizationCounts,
    pub std_err: PolarizationCounts,
    pub samples: usize,
}

/// Monte-Carlo counterpart of [`averaged_counts`].
///
/// Draws δ ~ N(0, σ²) and a spin from the ensemble for each sample. The
/// random stream is selected by `(seed, stream)`, so scans can give each grid
/// point its own independent substream and stay bit-identical however they
/// are scheduled.
pub fn averaged_counts_mc(omega: Energy, model: &ScatteringModel, stream: u64) -> McEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(model.jitter.seed);
    rng.set_stream(stream);
    let resolved = SpinResolved::new(omega, model);
    let sigma = model.jitter.sigma.uev();
    let n = model.jitter.mc_samples;

    let mut mean = [0.0f64; 4];
    let mut m2 = [0.0f64; 4];
    for k in 1..=n {
        let up = rng.random::<f64>() < resolved.p_up;
        let z: f64 = rng.sample(StandardNormal);
        let offset = sigma * z;
        let sample = if up {
            resolved.spin_up(offset)
        } else {
            resolved.spin_down(offset)
        };
        // Welford update keeps constant samples exact.
        for (c, x) in sample.channels().into_iter().enumerate() {
            let delta = x - mean[c];
            mean[c] += delta / k as f64;
            m2[c] += delta * (x - mean[c]);
        }
    }
    let se = |c: usize| {
        if n > 1 {
            (m2[c] / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        }
    };
    McEstimate {
        counts: PolarizationCounts::new(mean[0], mean[1], mean[2], mean[3]),
        std_err: PolarizationCounts::new(se(0), se(1), se(2), se(3)),
        samples: n,
    }
}

/// Averaging route used by scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Quadrature,
    MonteCarlo,
}

/// Averaged counts at each energy; Monte-Carlo substreams are keyed by position.
pub fn counts_at(
    energies: &[Energy],
    model: &ScatteringModel,
    averaging: Averaging,
    exec: Execution,
) -> Result<Vec<PolarizationCounts>> {
    match averaging {
        Averaging::Quadrature => {
            let nodes = quadrature_nodes(&model.jitter)?;
            Ok(exec.map_slice(energies, |&w| averaged_counts_on(w, model, &nodes)))
        }
        Averaging::MonteCarlo => Ok(exec.map_indexed(energies.len(), |i| {
            averaged_counts_mc(energies[i], model, i as u64).counts
        })),
    }
}

/// Phase estimate at one scan point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanPhase {
    Measured(PhaseResult),
    /// No cross-polarized light at all (h = 0): no rotation, reported as φ = 0.
    NoSignal,
    /// The estimator is undefined or the counts are inconsistent.
    Undefined,
}

impl ScanPhase {
    pub fn from_counts(counts: &PolarizationCounts) -> Self {
        match phase_from_counts(counts) {
            Ok(p) => ScanPhase::Measured(p),
            Err(_) if counts.h == 0.0 && counts.v > 0.0 && counts.d == counts.a => {
                ScanPhase::NoSignal
            }
            Err(_) => ScanPhase::Undefined,
        }
    }

    /// φ in rad, `None` when undefined.
    pub fn phi(&self) -> Option<f64> {
        match self {
            ScanPhase::Measured(p) => Some(p.phi),
            ScanPhase::NoSignal => Some(0.0),
            ScanPhase::Undefined => None,
        }
    }

    pub fn saturated(&self) -> bool {
        matches!(self, ScanPhase::Measured(p) if p.saturated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub omega: Energy,
    pub counts: PolarizationCounts,
    pub phase: ScanPhase,
}

/// Phase estimate at arbitrary laser energies.
pub fn phase_at(
    energies: &[Energy],
    model: &ScatteringModel,
    averaging: Averaging,
    exec: Execution,
) -> Result<Vec<PhasePoint>> {
    let counts = counts_at(energies, model, averaging, exec)?;
    Ok(energies
        .iter()
        .zip(counts)
        .map(|(&omega, counts)| PhasePoint {
            omega,
            counts,
            phase: ScanPhase::from_counts(&counts),
        })
        .collect())
}

pub fn phase_scan(
    grid: &ScanGrid,
    model: &ScatteringModel,
    averaging: Averaging,
    exec: Execution,
) -> Result<Vec<PhasePoint>> {
    phase_at(&grid.energies(), model, averaging, exec)
}

/// Cross-polarized (H-detected) intensity for V input across the grid.
pub fn rs_lineshape(
    grid: &ScanGrid,
    model: &ScatteringModel,
    averaging: Averaging,
    exec: Execution,
) -> Result<Vec<(Energy, f64)>> {
    let energies = grid.energies();
    let counts = counts_at(&energies, model, averaging, exec)?;
    Ok(energies
        .into_iter()
        .zip(counts)
        .map(|(w, c)| (w, c.h))
        .collect())
}

/// Width between the outermost half-maximum crossings of sampled data,
/// linearly interpolated. `None` if the maximum is not positive or a
/// crossing falls outside the samples.
pub fn sampled_fwhm(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let (peak_idx, &peak) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let first = ys.iter().position(|&y| y >= half)?;
    let last = ys.len() - 1 - ys.iter().rev().position(|&y| y >= half)?;
    if first == 0 || last + 1 == ys.len() || first > peak_idx || last < peak_idx {
        return None;
    }
    let cross = |i: usize, j: usize| {
        let t = (half - ys[i]) / (ys[j] - ys[i]);
        xs[i] + t * (xs[j] - xs[i])
    };
    Some(cross(last + 1, last) - cross(first - 1, first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qed::{coupling_for_rate, BranchOrder};
    use approx::assert_relative_eq;

    fn study_model(delta_z: f64, sigma: f64, spins: SpinEnsemble) -> ScatteringModel {
        let cavity = CavitySpec::new(Energy::from_mev(1388.0), Energy::from_mev(4.1), 0.9).unwrap();
        let omega_x = Energy::from_mev(1385.3);
        let g = coupling_for_rate(Energy::from_uev(0.52), omega_x, &cavity).unwrap();
        let dipole = DipoleSpec::new(
            omega_x,
            Energy::from_uev(delta_z),
            g,
            Energy::from_uev(0.28),
            Energy::ZERO,
        )
        .unwrap();
        let jitter = JitterSpec::with_sigma(Energy::from_uev(sigma), 7).unwrap();
        ScatteringModel::new(cavity, dipole, jitter, spins)
    }

    fn detuned(model: &ScatteringModel, d: f64) -> Energy {
        model.dipole.omega_x() + Energy::from_uev(d)
    }

    #[test]
    fn zero_splitting_thermal_ensemble_cancels_exactly() {
        let m = study_model(0.0, 1.72, SpinEnsemble::thermal());
        for k in -10..=10 {
            let c = averaged_counts(detuned(&m, 0.4 * k as f64), &m).unwrap();
            assert_eq!(c.d, c.a);
            assert_eq!(phase_from_counts(&c).unwrap().phi, 0.0);
        }
    }

    #[test]
    fn no_jitter_single_spin_is_unaveraged() {
        let m = study_model(1.0, 0.0, SpinEnsemble::down());
        let w = detuned(&m, -0.3);
        let c = averaged_counts(w, &m).unwrap();
        let r0 = crate::qed::cold_reflection(w, &m.cavity);
        let rm = crate::qed::coupled_reflection(
            w,
            &m.cavity,
            m.dipole.branch_energy(Circular::Minus),
            &m.dipole,
        );
        let direct = counts_from_jones(&crate::polarization::scatter_linear_v(r0, rm));
        assert_eq!(c, direct);
    }

    #[test]
    fn monte_carlo_without_jitter_matches_exactly() {
        let m = study_model(1.0, 0.0, SpinEnsemble::up());
        let m = ScatteringModel {
            jitter: m.jitter.with_mc_samples(1000).unwrap(),
            ..m
        };
        let w = detuned(&m, 0.2);
        let mc = averaged_counts_mc(w, &m, 3);
        assert_eq!(mc.counts, averaged_counts(w, &m).unwrap());
        assert_eq!(mc.std_err, PolarizationCounts::default());
    }

    #[test]
    fn monte_carlo_is_deterministic_per_stream() {
        let m = study_model(1.0, 1.72, SpinEnsemble::thermal());
        let m = ScatteringModel {
            jitter: m.jitter.with_mc_samples(5000).unwrap(),
            ..m
        };
        let w = detuned(&m, 0.5);
        assert_eq!(averaged_counts_mc(w, &m, 11), averaged_counts_mc(w, &m, 11));
        assert_ne!(
            averaged_counts_mc(w, &m, 11).counts,
            averaged_counts_mc(w, &m, 12).counts
        );
    }

    #[test]
    fn quadrature_order_convergence() {
        let m = study_model(1.0, 1.7221, SpinEnsemble::thermal());
        let m2 = ScatteringModel {
            jitter: m
                .jitter
                .with_quadrature_order(2 * DEFAULT_QUADRATURE_ORDER)
                .unwrap(),
            ..m
        };
        for d in [-4.0, -1.0, 0.0, 0.3, 2.5] {
            let a = averaged_counts(detuned(&m, d), &m).unwrap();
            let b = averaged_counts(detuned(&m, d), &m2).unwrap();
            for (x, y) in a.channels().iter().zip(b.channels()) {
                assert!((x - y).abs() <= 1e-6 * y.abs(), "{d}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn spin_flip_swaps_diagonal_channels() {
        let base = study_model(2.0, 1.0, SpinEnsemble::new(0.25).unwrap());
        let flipped = ScatteringModel {
            dipole: base.dipole.with_branch_order(BranchOrder::SigmaPlusLower),
            spins: base.spins.swapped(),
            ..base
        };
        for d in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let a = averaged_counts(detuned(&base, d), &base).unwrap();
            let b = averaged_counts(detuned(&base, d), &flipped).unwrap();
            assert_eq!(a.h, b.h);
            assert_eq!(a.v, b.v);
            assert_eq!(a.d, b.a);
            assert_eq!(a.a, b.d);
        }
    }

    #[test]
    fn decoupled_dot_gives_no_signal() {
        let m = study_model(1.0, 1.7, SpinEnsemble::thermal());
        let m = ScatteringModel {
            dipole: m.dipole.with_coupling(Energy::ZERO).unwrap(),
            ..m
        };
        let grid = ScanGrid::around(
            m.dipole.omega_x(),
            Energy::from_uev(-5.0),
            Energy::from_uev(5.0),
            41,
        )
        .unwrap();
        for p in phase_scan(&grid, &m, Averaging::Quadrature, Execution::Parallel).unwrap() {
            assert_eq!(p.counts.h, 0.0);
            assert_eq!(p.phase, ScanPhase::NoSignal);
            assert_eq!(p.phase.phi(), Some(0.0));
        }
        for (_, h) in rs_lineshape(&grid, &m, Averaging::Quadrature, Execution::Sequential).unwrap()
        {
            assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn lineshape_width_without_jitter_is_transform_limited() {
        let m = study_model(0.0, 0.0, SpinEnsemble::down());
        let grid = ScanGrid::around(
            m.dipole.omega_x(),
            Energy::from_uev(-6.0),
            Energy::from_uev(6.0),
            2401,
        )
        .unwrap();
        let shape = rs_lineshape(&grid, &m, Averaging::Quadrature, Execution::Parallel).unwrap();
        let xs: Vec<f64> = shape.iter().map(|(w, _)| w.uev()).collect();
        let ys: Vec<f64> = shape.iter().map(|(_, h)| *h).collect();
        let width = sampled_fwhm(&xs, &ys).unwrap();
        assert!((width - 0.8).abs() < 0.01, "{width}");
    }

    #[test]
    fn parallel_and_sequential_scans_are_identical() {
        let m = study_model(1.0, 1.72, SpinEnsemble::thermal());
        let m = ScatteringModel {
            jitter: m.jitter.with_mc_samples(2000).unwrap(),
            ..m
        };
        let grid = ScanGrid::around(
            m.dipole.omega_x(),
            Energy::from_uev(-4.0),
            Energy::from_uev(4.0),
            33,
        )
        .unwrap();
        for avg in [Averaging::Quadrature, Averaging::MonteCarlo] {
            let a = phase_scan(&grid, &m, avg, Execution::Sequential).unwrap();
            let b = phase_scan(&grid, &m, avg, Execution::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sampled_fwhm_of_triangle() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| (10.0 - (x - 10.0f64).abs()).max(0.0))
            .collect();
        assert_relative_eq!(sampled_fwhm(&xs, &ys).unwrap(), 10.0, epsilon = 1e-12);
        assert!(sampled_fwhm(&xs, &[0.0; 21]).is_none());
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = ScanGrid::new(Energy::from_uev(-1.0), Energy::from_uev(1.0), 5).unwrap();
        let e = g.energies();
        assert_eq!(e[0].uev(), -1.0);
        assert_eq!(e[2].uev(), 0.0);
        assert_eq!(e[4].uev(), 1.0);
        assert!(ScanGrid::new(Energy::ZERO, Energy::ZERO, 5).is_err());
        assert!(ScanGrid::new(Energy::ZERO, Energy::from_uev(1.0), 1).is_err());
    }
}
