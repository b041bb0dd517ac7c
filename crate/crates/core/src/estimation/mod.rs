//! Least-squares estimation of the coupling rate from phase scans and of the
//! bulk lifetime from lifetime-vs-detuning data.

mod coupling;
mod lifetime;
pub mod lm;

pub use coupling::{fit_coupling, CouplingFitOptions, CouplingFitSetup, CouplingParameterization};
pub use lifetime::{
    fit_lifetime_scale, inverse_lifetime_model, GammaRatio, GammaRatioTable, LifetimeDataset,
    LifetimeRow,
};
pub use lm::LmOptions;

use serde::{Deserialize, Serialize};

use crate::ensemble::{phase_at, Averaging, ScatteringModel};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::units::Energy;

/// One phase measurement: laser energy, φ in rad and a non-negative weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub omega: Energy,
    pub phi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDataset {
    rows: Vec<PhaseRow>,
}

impl PhaseDataset {
    pub fn new(rows: Vec<PhaseRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("data", "phase dataset is empty"));
        }
        for (i, row) in rows.iter().enumerate() {
            if !row.omega.is_finite() || !row.phi.is_finite() {
                return Err(Error::invalid("data", format!("row {i}: non-finite value")));
            }
            if !(row.weight >= 0.0) || !row.weight.is_finite() {
                return Err(Error::invalid(
                    "data",
                    format!("row {i}: weight must be finite and >= 0"),
                ));
            }
        }
        if rows
            .windows(2)
            .any(|w| !(w[1].omega.uev() > w[0].omega.uev()))
        {
            return Err(Error::invalid(
                "data",
                "frequencies must be strictly increasing",
            ));
        }
        Ok(PhaseDataset { rows })
    }

    pub fn rows(&self) -> &[PhaseRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn energies(&self) -> Vec<Energy> {
        self.rows.iter().map(|r| r.omega).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// One-σ uncertainty; NaN when the data cannot constrain it.
    pub std_err: f64,
}

impl FitParameter {
    pub fn new(name: &str, value: f64, std_err: f64) -> Self {
        FitParameter {
            name: name.to_string(),
            value,
            std_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Free parameters in natural units.
    pub parameters: Vec<FitParameter>,
    /// Quantities derived from the free parameters.
    pub derived: Vec<FitParameter>,
    pub beta: Option<f64>,
    pub beta_std_err: Option<f64>,
    pub residual_rms: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A parameter sits on one of its bounds.
    pub at_bound: bool,
    pub gradient_cosine: f64,
    pub cost_history: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }
}

/// `√w_i (φ_model(ω_i) − φ_i)`; points where the model phase is undefined count as φ = 0.
pub fn residuals(
    data: &PhaseDataset,
    model: &ScatteringModel,
    exec: Execution,
) -> Result<Vec<f64>> {
    let predicted = phase_at(&data.energies(), model, Averaging::Quadrature, exec)?;
    Ok(data
        .rows
        .iter()
        .zip(predicted)
        .map(|(row, p)| row.weight.sqrt() * (p.phase.phi().unwrap_or(0.0) - row.phi))
        .collect())
}

pub(crate) fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        (lm::sum_sq(r) / r.len() as f64).sqrt()
    }
}

/// Covariance of natural parameters from the χ² curvature, scaled by reduced χ².
pub(crate) fn curvature_covariance(jac: &[Vec<f64>], chi2: f64, n: usize) -> Option<Vec<Vec<f64>>> {
    let p = jac.len();
    if n <= p {
        return None;
    }
    let (jtj, _) = lm::normal_equations(jac, &vec![0.0; n]);
    let inv = lm::invert_spd(&jtj)?;
    let s2 = chi2 / (n - p) as f64;
    Some(
        inv.into_iter()
            .map(|row| row.into_iter().map(|v| v * s2).collect())
            .collect(),
    )
}
