//! Spin-dependent Kerr rotation from a charged quantum dot in a low-Q
//! micropillar cavity.
//!
//! All energies are in μeV unless a name says otherwise; widths are FWHM.

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod estimation;
pub mod manifest;
pub mod par;
pub mod polarization;
pub mod qed;
pub mod quadrature;
pub mod units;

pub use error::{Error, Result};
pub use units::Energy;
