//! Numerical laboratory for the fuzzy Landau equation.

pub mod coefficients;
pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fisher_lifted;
pub mod generic;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod kernels;
pub mod spectral;
pub mod tolerances;
pub mod verify;

pub use error::{Error, ErrorCategory, Result};
pub use grid::{DistributionField, PhaseGrid};
pub use kernels::{KappaChoice, ModelParams};
