//! TOML run configuration. Units are part of every key name.
//!
//! ```toml
//! [cavity]
//! omega_c_meV = 1388.0
//! kappa_meV = 4.1          # or q_factor
//! eta_top = 0.9
//!
//! [dipole]
//! omega_x_meV = 1385.3
//! delta_z_ueV = 1.0
//! Gamma_at_qd_ueV = 0.52   # or g_ueV, or beta_with_total = { beta, total_ueV }
//! gamma_ueV = 0.28
//!
//! [jitter]
//! calibrate_from = { lorentzian_fwhm_ueV = 0.8, voigt_fwhm_ueV = 4.5 }  # or sigma_ueV
//! seed = 7
//!
//! [spins]
//! p_up = 0.5
//!
//! [scan]
//! start_ueV = -8.0
//! stop_ueV = 8.0
//! points = 321
//! relative_to = "qd"
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    calibrate_jitter, JitterSpec, ScanGrid, ScatteringModel, SpinEnsemble, DEFAULT_MC_SAMPLES,
    DEFAULT_QUADRATURE_ORDER,
};
use crate::error::{Error, FieldError, Result};
use crate::estimation::CouplingParameterization;
use crate::qed::{coupling_for_rate, BranchOrder, CavitySpec, DipoleSpec};
use crate::units::Energy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub cavity: CavityConfig,
    pub dipole: DipoleConfig,
    pub jitter: JitterConfig,
    #[serde(default)]
    pub spins: SpinConfig,
    pub scan: ScanConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    #[serde(rename = "omega_c_meV")]
    pub omega_c_mev: f64,
    #[serde(rename = "kappa_meV", default, skip_serializing_if = "Option::is_none")]
    pub kappa_mev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_factor: Option<f64>,
    #[serde(default = "default_eta_top")]
    pub eta_top: f64,
}

fn default_eta_top() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaWithTotal {
    pub beta: f64,
    #[serde(rename = "total_ueV")]
    pub total_uev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleConfig {
    #[serde(rename = "omega_x_meV")]
    pub omega_x_mev: f64,
    #[serde(rename = "delta_z_ueV")]
    pub delta_z_uev: f64,
    #[serde(rename = "g_ueV", default, skip_serializing_if = "Option::is_none")]
    pub g_uev: Option<f64>,
    #[serde(
        rename = "Gamma_at_qd_ueV",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub gamma_at_qd_uev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_with_total: Option<BetaWithTotal>,
    /// Required unless `beta_with_total` fixes it.
    #[serde(rename = "gamma_ueV", default, skip_serializing_if = "Option::is_none")]
    pub gamma_uev: Option<f64>,
    #[serde(rename = "gamma_star_ueV", default)]
    pub gamma_star_uev: f64,
    #[serde(default)]
    pub branch_order: BranchOrder,
    /// Bulk (cavity-free) lifetime, used by the lifetime model and β sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_hom_ns: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateFrom {
    #[serde(rename = "lorentzian_fwhm_ueV")]
    pub lorentzian_fwhm_uev: f64,
    #[serde(rename = "voigt_fwhm_ueV")]
    pub voigt_fwhm_uev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterConfig {
    #[serde(rename = "sigma_ueV", default, skip_serializing_if = "Option::is_none")]
    pub sigma_uev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_from: Option<CalibrateFrom>,
    #[serde(default = "default_quadrature_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    pub seed: u64,
}

fn default_quadrature_order() -> usize {
    DEFAULT_QUADRATURE_ORDER
}

fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub p_up: f64,
}

impl Default for SpinConfig {
    fn default() -> Self {
        SpinConfig { p_up: 0.5 }
    }
}

/// Origin of the detuning axis in inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Qd,
    Cavity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(rename = "start_ueV")]
    pub start_uev: f64,
    #[serde(rename = "stop_ueV")]
    pub stop_uev: f64,
    pub points: usize,
    #[serde(default)]
    pub relative_to: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "start_meV")]
    pub start_mev: f64,
    #[serde(rename = "stop_meV")]
    pub stop_mev: f64,
    pub points: usize,
    #[serde(default = "cavity_reference")]
    pub relative_to: Reference,
}

fn cavity_reference() -> Reference {
    Reference::Cavity
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            start_mev: -8.0,
            stop_mev: 8.0,
            points: 161,
            relative_to: Reference::Cavity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub free_delta_z: bool,
    #[serde(default)]
    pub parameterization: CouplingParameterization,
    #[serde(
        rename = "initial_Gamma_at_qd_ueV",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub initial_gamma_at_qd_uev: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_max_iterations() -> usize {
    200
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            free_delta_z: false,
            parameterization: CouplingParameterization::Rate,
            initial_gamma_at_qd_uev: None,
            max_iterations: default_max_iterations(),
        }
    }
}

/// Validated, ready-to-run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ScatteringModel,
    pub scan: ScanGrid,
    /// Energy that detunings in the scan are measured from.
    pub scan_origin: Energy,
    pub sweep: SweepConfig,
    pub fit: FitConfig,
    pub t1_hom_ns: Option<f64>,
}

impl Experiment {
    pub fn origin(&self, reference: Reference) -> Energy {
        match reference {
            Reference::Qd => self.model.dipole.omega_x(),
            Reference::Cavity => self.model.cavity.omega_c(),
        }
    }
}

struct Collector {
    errors: Vec<FieldError>,
}

impl Collector {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn finite(&mut self, path: &str, value: f64) -> bool {
        if value.is_finite() {
            true
        } else {
            self.push(path, "must be finite");
            false
        }
    }

    fn non_negative(&mut self, path: &str, value: f64) {
        if self.finite(path, value) && value < 0.0 {
            self.push(path, "must be >= 0");
        }
    }

    fn positive(&mut self, path: &str, value: f64) {
        if self.finite(path, value) && value <= 0.0 {
            self.push(path, "must be > 0");
        }
    }

    fn unit_interval(&mut self, path: &str, value: f64) {
        if self.finite(path, value) && !(0.0..=1.0).contains(&value) {
            self.push(path, "must lie in [0, 1]");
        }
    }

    /// Records an error from a constructor that validates on its own.
    fn adopt<T>(&mut self, path: &str, result: Result<T>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let span = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_default();
            Error::Config(vec![FieldError {
                path: span,
                message: e.message().to_string(),
            }])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Checks every field and assembles the model, reporting all problems at once.
    pub fn build(&self) -> Result<Experiment> {
        let mut c = Collector { errors: Vec::new() };

        let cav = &self.cavity;
        c.positive("cavity.omega_c_meV", cav.omega_c_mev);
        c.unit_interval("cavity.eta_top", cav.eta_top);
        match (cav.kappa_mev, cav.q_factor) {
            (Some(k), None) => c.positive("cavity.kappa_meV", k),
            (None, Some(q)) => c.positive("cavity.q_factor", q),
            _ => c.push("cavity", "give exactly one of kappa_meV and q_factor"),
        }

        let d = &self.dipole;
        c.positive("dipole.omega_x_meV", d.omega_x_mev);
        c.non_negative("dipole.delta_z_ueV", d.delta_z_uev);
        c.non_negative("dipole.gamma_star_ueV", d.gamma_star_uev);
        let couplings = [
            d.g_uev.is_some(),
            d.gamma_at_qd_uev.is_some(),
            d.beta_with_total.is_some(),
        ]
        .iter()
        .filter(|&&x| x)
        .count();
        if couplings != 1 {
            c.push(
                "dipole",
                "give exactly one of g_ueV, Gamma_at_qd_ueV and beta_with_total",
            );
        }
        if let Some(g) = d.g_uev {
            c.non_negative("dipole.g_ueV", g);
        }
        if let Some(rate) = d.gamma_at_qd_uev {
            c.non_negative("dipole.Gamma_at_qd_ueV", rate);
        }
        match (d.beta_with_total, d.gamma_uev) {
            (Some(bt), gamma) => {
                c.unit_interval("dipole.beta_with_total.beta", bt.beta);
                c.positive("dipole.beta_with_total.total_ueV", bt.total_uev);
                if gamma.is_some() {
                    c.push(
                        "dipole.gamma_ueV",
                        "is implied by beta_with_total; remove it",
                    );
                }
            }
            (None, Some(gamma)) => c.non_negative("dipole.gamma_ueV", gamma),
            (None, None) => c.push("dipole.gamma_ueV", "missing"),
        }
        if let Some(t1) = d.t1_hom_ns {
            c.positive("dipole.t1_hom_ns", t1);
        }

        let j = &self.jitter;
        match (j.sigma_uev, j.calibrate_from) {
            (Some(s), None) => c.non_negative("jitter.sigma_ueV", s),
            (None, Some(cf)) => {
                c.non_negative(
                    "jitter.calibrate_from.lorentzian_fwhm_ueV",
                    cf.lorentzian_fwhm_uev,
                );
                c.positive("jitter.calibrate_from.voigt_fwhm_ueV", cf.voigt_fwhm_uev);
            }
            _ => c.push("jitter", "give exactly one of sigma_ueV and calibrate_from"),
        }
        if j.quadrature_order == 0 {
            c.push("jitter.quadrature_order", "must be >= 1");
        }
        if j.mc_samples == 0 {
            c.push("jitter.mc_samples", "must be >= 1");
        }
        c.unit_interval("spins.p_up", self.spins.p_up);

        let s = &self.scan;
        if c.finite("scan.start_ueV", s.start_uev)
            && c.finite("scan.stop_ueV", s.stop_uev)
            && s.stop_uev <= s.start_uev
        {
            c.push("scan.stop_ueV", "must exceed start_ueV");
        }
        if s.points < 2 {
            c.push("scan.points", "must be >= 2");
        }
        if let Some(sw) = &self.beta_sweep {
            if c.finite("beta_sweep.start_meV", sw.start_mev)
                && c.finite("beta_sweep.stop_meV", sw.stop_mev)
                && sw.stop_mev <= sw.start_mev
            {
                c.push("beta_sweep.stop_meV", "must exceed start_meV");
            }
            if sw.points < 2 {
                c.push("beta_sweep.points", "must be >= 2");
            }
        }
        if let Some(f) = &self.fit {
            if let Some(r) = f.initial_gamma_at_qd_uev {
                c.positive("fit.initial_Gamma_at_qd_ueV", r);
            }
            if f.max_iterations == 0 {
                c.push("fit.max_iterations", "must be >= 1");
            }
        }
        if !c.errors.is_empty() {
            return Err(Error::Config(c.errors));
        }

        // Field-level checks passed; the remaining ones need derived quantities.
        let omega_c = Energy::from_mev(cav.omega_c_mev);
        let cavity = match (cav.kappa_mev, cav.q_factor) {
            (Some(k), _) => c.adopt(
                "cavity",
                CavitySpec::new(omega_c, Energy::from_mev(k), cav.eta_top),
            ),
            (_, Some(q)) => c.adopt("cavity", CavitySpec::from_q_factor(omega_c, q, cav.eta_top)),
            _ => unreachable!(),
        };
        let omega_x = Energy::from_mev(d.omega_x_mev);
        let gamma_star = Energy::from_uev(d.gamma_star_uev);

        let (g, gamma) = match cavity {
            None => (None, None),
            Some(cavity) => {
                if let Some(bt) = d.beta_with_total {
                    let rate = bt.beta * (bt.total_uev + d.gamma_star_uev);
                    if rate > bt.total_uev {
                        c.push(
                            "dipole.beta_with_total",
                            "β·(total + γ*) exceeds the total linewidth",
                        );
                        (None, None)
                    } else {
                        let g = c.adopt(
                            "dipole.beta_with_total",
                            coupling_for_rate(Energy::from_uev(rate), omega_x, &cavity),
                        );
                        (g, Some(Energy::from_uev(bt.total_uev - rate)))
                    }
                } else {
                    let gamma = d.gamma_uev.map(Energy::from_uev);
                    let g = match (d.g_uev, d.gamma_at_qd_uev) {
                        (Some(g), _) => Some(Energy::from_uev(g)),
                        (_, Some(rate)) => c.adopt(
                            "dipole.Gamma_at_qd_ueV",
                            coupling_for_rate(Energy::from_uev(rate), omega_x, &cavity),
                        ),
                        _ => None,
                    };
                    (g, gamma)
                }
            }
        };
        let dipole = match (g, gamma) {
            (Some(g), Some(gamma)) => c
                .adopt(
                    "dipole",
                    DipoleSpec::new(
                        omega_x,
                        Energy::from_uev(d.delta_z_uev),
                        g,
                        gamma,
                        gamma_star,
                    ),
                )
                .map(|dp| dp.with_branch_order(d.branch_order)),
            _ => None,
        };

        let sigma = match (j.sigma_uev, j.calibrate_from) {
            (Some(s), _) => Some(Energy::from_uev(s)),
            (_, Some(cf)) => c.adopt(
                "jitter.calibrate_from",
                calibrate_jitter(
                    Energy::from_uev(cf.lorentzian_fwhm_uev),
                    Energy::from_uev(cf.voigt_fwhm_uev),
                ),
            ),
            _ => None,
        };
        let jitter = sigma.and_then(|s| {
            c.adopt(
                "jitter",
                JitterSpec::new(s, j.quadrature_order, j.mc_samples, j.seed),
            )
        });
        let spins = c.adopt("spins.p_up", SpinEnsemble::new(self.spins.p_up));

        let (Some(cavity), Some(dipole), Some(jitter), Some(spins)) =
            (cavity, dipole, jitter, spins)
        else {
            return Err(Error::Config(c.errors));
        };
        let model = ScatteringModel::new(cavity, dipole, jitter, spins);
        let scan_origin = match s.relative_to {
            Reference::Qd => omega_x,
            Reference::Cavity => omega_c,
        };
        let scan = c.adopt(
            "scan",
            ScanGrid::around(
                scan_origin,
                Energy::from_uev(s.start_uev),
                Energy::from_uev(s.stop_uev),
                s.points,
            ),
        );
        match scan {
            Some(scan) if c.errors.is_empty() => Ok(Experiment {
                model,
                scan,
                scan_origin,
                sweep: self.beta_sweep.clone().unwrap_or_default(),
                fit: self.fit.clone().unwrap_or_default(),
                t1_hom_ns: d.t1_hom_ns,
            }),
            _ => Err(Error::Config(c.errors)),
        }
    }
}
