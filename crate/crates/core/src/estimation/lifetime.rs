use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions};
use super::{curvature_covariance, rms, FitParameter, FitResult};
use crate::error::{Error, Result};
use crate::qed::{purcell_rate, CavitySpec};
use crate::units::{Energy, HBAR_UEV_NS};

/// γ(ω)/γ_hom tabulated against detuning from the cavity, ω − ω_c, in meV.
///
/// Linear interpolation inside the table; anything outside is an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRatioTable {
    detuning_mev: Vec<f64>,
    ratio: Vec<f64>,
}

impl GammaRatioTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("gamma_table", "table is empty"));
        }
        if rows
            .iter()
            .any(|&(x, r)| !x.is_finite() || !r.is_finite() || r < 0.0)
        {
            return Err(Error::invalid(
                "gamma_table",
                "entries must be finite with ratio >= 0",
            ));
        }
        if rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid(
                "gamma_table",
                "detunings must be strictly increasing",
            ));
        }
        let (detuning_mev, ratio) = rows.into_iter().unzip();
        Ok(GammaRatioTable {
            detuning_mev,
            ratio,
        })
    }

    pub fn range_mev(&self) -> (f64, f64) {
        (self.detuning_mev[0], *self.detuning_mev.last().unwrap())
    }

    /// Ratio at detuning `detuning_mev` from the cavity.
    pub fn at(&self, detuning_mev: f64) -> Result<f64> {
        let (min_mev, max_mev) = self.range_mev();
        if !(detuning_mev >= min_mev && detuning_mev <= max_mev) {
            return Err(Error::TableOutOfRange {
                detuning_mev,
                min_mev,
                max_mev,
            });
        }
        let xs = &self.detuning_mev;
        let i = xs.partition_point(|&x| x <= detuning_mev);
        if i == xs.len() {
            return Ok(*self.ratio.last().unwrap());
        }
        if i == 0 {
            return Ok(self.ratio[0]);
        }
        let (x0, x1) = (xs[i - 1], xs[i]);
        let t = (detuning_mev - x0) / (x1 - x0);
        Ok(self.ratio[i - 1] + t * (self.ratio[i] - self.ratio[i - 1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaRatio {
    Constant(f64),
    Table(GammaRatioTable),
}

impl GammaRatio {
    pub fn at(&self, omega: Energy, cavity: &CavitySpec) -> Result<f64> {
        match self {
            GammaRatio::Constant(r) => Ok(*r),
            GammaRatio::Table(t) => t.at((omega - cavity.omega_c()).mev()),
        }
    }
}

/// One measured lifetime: emitter energy and 1/T1 in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub omega: Energy,
    pub inverse_t1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeDataset {
    rows: Vec<LifetimeRow>,
}

impl LifetimeDataset {
    pub fn new(rows: Vec<LifetimeRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("data", "lifetime dataset is empty"));
        }
        for (i, row) in rows.iter().enumerate() {
            if !row.omega.is_finite() || !(row.inverse_t1 > 0.0) || !row.inverse_t1.is_finite() {
                return Err(Error::invalid(
                    "data",
                    format!("row {i}: need finite energy and 1/T1 > 0"),
                ));
            }
        }
        Ok(LifetimeDataset { rows })
    }

    pub fn rows(&self) -> &[LifetimeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `1/T1(ω) = (Γ(ω) + ratio·ħ/T1_hom) / ħ`, in ns⁻¹.
pub fn inverse_lifetime_model(
    omega: Energy,
    cavity: &CavitySpec,
    g: Energy,
    ratio: f64,
    t1_hom_ns: f64,
) -> f64 {
    purcell_rate(omega, cavity, g).uev() / HBAR_UEV_NS + ratio / t1_hom_ns
}

/// Fits the bulk lifetime T1_hom given the cavity, the coupling and γ(ω)/γ_hom.
pub fn fit_lifetime_scale(
    data: &LifetimeDataset,
    cavity: &CavitySpec,
    g: Energy,
    ratio: &GammaRatio,
    options: &LmOptions,
) -> Result<FitResult> {
    let cavity_part: Vec<f64> = data
        .rows
        .iter()
        .map(|r| purcell_rate(r.omega, cavity, g).uev() / HBAR_UEV_NS)
        .collect();
    let ratios = data
        .rows
        .iter()
        .map(|r| ratio.at(r.omega, cavity))
        .collect::<Result<Vec<f64>>>()?;
    if ratios.iter().all(|&r| r == 0.0) {
        return Err(Error::invalid(
            "gamma_ratio",
            "ratio is zero at every point; T1_hom is unconstrained",
        ));
    }

    let model_residuals = |t1_hom: f64| -> Vec<f64> {
        data.rows
            .iter()
            .zip(&cavity_part)
            .zip(&ratios)
            .map(|((row, c), r)| c + r / t1_hom - row.inverse_t1)
            .collect()
    };

    // The model is linear in 1/T1_hom; its least-squares solution seeds the search.
    let num: f64 = data
        .rows
        .iter()
        .zip(&cavity_part)
        .zip(&ratios)
        .map(|((row, c), r)| r * (row.inverse_t1 - c))
        .sum();
    let den: f64 = ratios.iter().map(|r| r * r).sum();
    let rate_guess = num / den;
    let start = if rate_guess > 0.0 {
        1.0 / rate_guess
    } else {
        1.0
    };

    let objective = |u: &[f64]| model_residuals(u[0].clamp(-50.0, 50.0).exp());
    let outcome = lm::minimize(objective, &[start.ln()], options);
    let t1_hom = outcome.params[0].clamp(-50.0, 50.0).exp();

    let h = 1e-6 * t1_hom;
    let rp = model_residuals(t1_hom + h);
    let rm = model_residuals(t1_hom - h);
    let jac = vec![rp
        .iter()
        .zip(&rm)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect::<Vec<f64>>()];
    let chi2 = outcome.cost;
    let n = data.len();
    let std_err = curvature_covariance(&jac, chi2, n)
        .map(|c| c[0][0].max(0.0).sqrt())
        .unwrap_or(f64::NAN);
    let gamma_hom = HBAR_UEV_NS / t1_hom;

    let result = FitResult {
        parameters: vec![FitParameter::new("t1_hom_ns", t1_hom, std_err)],
        derived: vec![FitParameter::new(
            "gamma_hom_ueV",
            gamma_hom,
            gamma_hom * std_err / t1_hom,
        )],
        beta: None,
        beta_std_err: None,
        residual_rms: rms(&outcome.residuals),
        chi2,
        reduced_chi2: if n > 1 {
            chi2 / (n - 1) as f64
        } else {
            f64::NAN
        },
        iterations: outcome.iterations,
        converged: outcome.converged,
        at_bound: false,
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
