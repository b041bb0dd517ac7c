use thiserror::Error;

use crate::estimation::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single failed check in a configuration file, tagged with its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("beta factor is undefined when all rates are zero")]
    UndefinedBeta,

    #[error("lifetime must be positive, got {0} ns")]
    NonPositiveLifetime(f64),

    #[error("linewidth must be positive, got {0} ueV")]
    NonPositiveLinewidth(f64),

    #[error("refractive index must be >= 1, got {0}")]
    IndexBelowOne(f64),

    #[error("phase estimator undefined: H and V counts must both be positive (h = {h}, v = {v})")]
    EstimatorUndefined { h: f64, v: f64 },

    #[error("inconsistent polarization counts: |sin(phi)| = {ratio} exceeds 1")]
    InconsistentCounts { ratio: f64 },

    #[error("polarization orientation undefined: h - v and d - a are both zero")]
    UndefinedOrientation,

    #[error("jitter calibration infeasible: target FWHM {target} ueV is narrower than the Lorentzian FWHM {lorentzian} ueV")]
    InfeasibleJitter { lorentzian: f64, target: f64 },

    #[error(
        "detuning {detuning_mev} meV is outside the tabulated range [{min_mev}, {max_mev}] meV"
    )]
    TableOutOfRange {
        detuning_mev: f64,
        min_mev: f64,
        max_mev: f64,
    },

    #[error("{source_name}, line {line}: {message}")]
    Dataset {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldError>),

    #[error("fit did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<FitResult>),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
