//! Parareal with single-step and two-step coarse propagators.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod optimizer;
pub mod parareal;
pub mod propagators;
pub mod quadrature;
pub mod rational;

pub use error::{Error, Result};
