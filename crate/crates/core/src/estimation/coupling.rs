use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions};
use super::{curvature_covariance, residuals, rms, FitParameter, FitResult, PhaseDataset};
use crate::ensemble::{JitterSpec, ScatteringModel, SpinEnsemble};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::qed::{coupling_for_rate, purcell_rate, BranchOrder, CavitySpec, DipoleSpec};
use crate::units::Energy;

const MIN_ROWS: usize = 5;
const U_LIMIT: f64 = 60.0;
const BOUND_FRACTION: f64 = 1e-6;

/// Everything held fixed while fitting Γ at the dot frequency.
///
/// The total radiative width `Γ_t = Γ(ω_x) + γ` is pinned (from the measured
/// lifetime), so a trial Γ fixes the side-leak rate `γ = Γ_t − Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFitSetup {
    pub cavity: CavitySpec,
    pub omega_x: Energy,
    pub total_linewidth: Energy,
    pub gamma_star: Energy,
    pub delta_z: Energy,
    pub branch_order: BranchOrder,
    pub jitter: JitterSpec,
    pub spins: SpinEnsemble,
}

impl CouplingFitSetup {
    /// Takes Γ_t, Δ_Z and every fixed quantity from an existing model.
    pub fn from_model(model: &ScatteringModel) -> Self {
        let d = &model.dipole;
        let rate = purcell_rate(d.omega_x(), &model.cavity, d.g());
        CouplingFitSetup {
            cavity: model.cavity,
            omega_x: d.omega_x(),
            total_linewidth: rate + d.gamma(),
            gamma_star: d.gamma_star(),
            delta_z: d.delta_z(),
            branch_order: d.branch_order(),
            jitter: model.jitter,
            spins: model.spins,
        }
    }

    /// Model with Γ(ω_x) = `rate` and splitting `delta_z`.
    pub fn model(&self, rate: Energy, delta_z: Energy) -> Result<ScatteringModel> {
        let gamma = self.total_linewidth - rate;
        if gamma.uev() < 0.0 {
            return Err(Error::invalid("Gamma", "rate exceeds the total linewidth"));
        }
        let g = coupling_for_rate(rate, self.omega_x, &self.cavity)?;
        let dipole = DipoleSpec::new(self.omega_x, delta_z, g, gamma, self.gamma_star)?
            .with_branch_order(self.branch_order);
        Ok(ScatteringModel::new(
            self.cavity,
            dipole,
            self.jitter,
            self.spins,
        ))
    }

    fn max_coupling(&self) -> Result<Energy> {
        coupling_for_rate(self.total_linewidth, self.omega_x, &self.cavity)
    }
}

/// Which quantity the optimizer moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingParameterization {
    /// Γ(ω_x) ∈ (0, Γ_t].
    #[default]
    Rate,
    /// g ∈ (0, g_max] with Γ(ω_x; g_max) = Γ_t.
    Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFitOptions {
    /// Fit Δ_Z jointly with Γ.
    pub free_delta_z: bool,
    pub parameterization: CouplingParameterization,
    /// Starting Γ(ω_x); defaults to Γ_t/2.
    pub initial_rate: Option<Energy>,
    pub lm: LmOptions,
    pub exec: Execution,
}

impl Default for CouplingFitOptions {
    fn default() -> Self {
        CouplingFitOptions {
            free_delta_z: false,
            parameterization: CouplingParameterization::Rate,
            initial_rate: None,
            lm: LmOptions::default(),
            exec: Execution::default(),
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u.clamp(-U_LIMIT, U_LIMIT)).exp())
}

fn logit(x: f64) -> f64 {
    let x = x.clamp(1e-9, 1.0 - 1e-9);
    (x / (1.0 - x)).ln()
}

struct Transform {
    parameterization: CouplingParameterization,
    total: f64,
    free_delta_z: bool,
    fixed_delta_z: f64,
}

impl Transform {
    /// Fraction of the upper bound reached by the first parameter.
    fn bound_fraction(&self, u: &[f64]) -> f64 {
        sigmoid(u[0])
    }

    fn rate(&self, u: &[f64]) -> f64 {
        let s = sigmoid(u[0]);
        match self.parameterization {
            CouplingParameterization::Rate => self.total * s,
            CouplingParameterization::Coupling => self.total * s * s,
        }
    }

    fn delta_z(&self, u: &[f64]) -> f64 {
        if self.free_delta_z {
            u[1].clamp(-U_LIMIT, U_LIMIT).exp()
        } else {
            self.fixed_delta_z
        }
    }

    fn initial(&self, rate: f64, delta_z: f64) -> Vec<f64> {
        let x = rate / self.total;
        let u0 = match self.parameterization {
            CouplingParameterization::Rate => logit(x),
            CouplingParameterization::Coupling => logit(x.sqrt()),
        };
        let mut u = vec![u0];
        if self.free_delta_z {
            u.push(delta_z.max(1e-6).ln());
        }
        u
    }
}

/// Fits Γ(ω_x) (and optionally Δ_Z) to a phase-vs-frequency scan.
pub fn fit_coupling(
    data: &PhaseDataset,
    setup: &CouplingFitSetup,
    options: &CouplingFitOptions,
) -> Result<FitResult> {
    let n_params = if options.free_delta_z { 2 } else { 1 };
    if data.len() < MIN_ROWS || data.len() <= n_params {
        return Err(Error::invalid(
            "data",
            format!(
                "need at least {MIN_ROWS} rows and more rows than parameters, got {}",
                data.len()
            ),
        ));
    }
    let total = setup.total_linewidth.uev();
    if !(total > 0.0) {
        return Err(Error::invalid("total_linewidth", "must be > 0"));
    }
    // Validate the fixed part once so residual evaluation cannot fail later.
    setup.model(setup.total_linewidth * 0.5, setup.delta_z)?;
    setup.max_coupling()?;

    let transform = Transform {
        parameterization: options.parameterization,
        total,
        free_delta_z: options.free_delta_z,
        fixed_delta_z: setup.delta_z.uev(),
    };
    let exec = options.exec;
    let natural_residuals = |rate: f64, delta_z: f64| -> Vec<f64> {
        match setup.model(Energy::from_uev(rate), Energy::from_uev(delta_z)) {
            Ok(model) => {
                residuals(data, &model, exec).unwrap_or_else(|_| vec![f64::NAN; data.len()])
            }
            Err(_) => vec![f64::NAN; data.len()],
        }
    };
    let objective = |u: &[f64]| natural_residuals(transform.rate(u), transform.delta_z(u));

    let start_rate = options.initial_rate.map(|r| r.uev()).unwrap_or(0.5 * total);
    let u0 = transform.initial(start_rate, setup.delta_z.uev());
    let outcome = lm::minimize(objective, &u0, &options.lm);

    let rate = transform.rate(&outcome.params);
    let delta_z = transform.delta_z(&outcome.params);
    let fraction = transform.bound_fraction(&outcome.params);
    let at_upper = fraction >= 1.0 - BOUND_FRACTION;
    let at_lower = fraction <= BOUND_FRACTION;

    let mut converged = outcome.converged;
    if !converged && (at_upper || at_lower) {
        // Projected-gradient test: moving inward from the bound must not lower the cost.
        let h = 1e-4 * total;
        let inward = if at_upper { rate - h } else { rate + h };
        let here = lm::sum_sq(&natural_residuals(rate, delta_z));
        let inside = lm::sum_sq(&natural_residuals(inward, delta_z));
        converged = here <= inside;
    }

    // Curvature in natural parameters.
    let h_rate = 1e-4 * total;
    let center = rate.clamp(h_rate, total - h_rate);
    let mut jac = vec![{
        let rp = natural_residuals(center + h_rate, delta_z);
        let rm = natural_residuals(center - h_rate, delta_z);
        rp.iter()
            .zip(&rm)
            .map(|(a, b)| (a - b) / (2.0 * h_rate))
            .collect::<Vec<f64>>()
    }];
    if options.free_delta_z {
        let h = 1e-4 * delta_z.max(1e-3);
        let rp = natural_residuals(rate, delta_z + h);
        let rm = natural_residuals(rate, (delta_z - h).max(0.0));
        let span = delta_z + h - (delta_z - h).max(0.0);
        jac.push(rp.iter().zip(&rm).map(|(a, b)| (a - b) / span).collect());
    }
    let chi2 = outcome.cost;
    let dof = data.len() - n_params;
    let covariance = curvature_covariance(&jac, chi2, data.len());
    let std_err = |i: usize| {
        covariance
            .as_ref()
            .map(|c| c[i][i].max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    };

    let rate_err = std_err(0);
    let mut parameters = vec![FitParameter::new("Gamma_at_qd_ueV", rate, rate_err)];
    if options.free_delta_z {
        parameters.push(FitParameter::new("delta_z_ueV", delta_z, std_err(1)));
    }
    let g = coupling_for_rate(Energy::from_uev(rate), setup.omega_x, &setup.cavity)?.uev();
    let beta_denominator = total + setup.gamma_star.uev();
    let derived = vec![
        FitParameter::new("gamma_ueV", total - rate, rate_err),
        FitParameter::new("g_ueV", g, f64::NAN),
        FitParameter::new("total_linewidth_ueV", total, 0.0),
    ];

    let result = FitResult {
        parameters,
        derived,
        beta: Some(rate / beta_denominator),
        beta_std_err: Some(rate_err / beta_denominator),
        residual_rms: rms(&outcome.residuals),
        chi2,
        reduced_chi2: chi2 / dof as f64,
        iterations: outcome.iterations,
        converged,
        at_bound: at_upper || at_lower,
        gradient_cosine: outcome.gradient_cosine,
        cost_history: outcome.cost_history,
        residuals: outcome.residuals,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}
