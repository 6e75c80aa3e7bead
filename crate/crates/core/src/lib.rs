//! Particle-in-cell and wave-equation solver for the Vlasov-Nordström system,
//! with decay diagnostics for small-data solutions.

pub mod characteristics;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod profiles;
pub mod quadrature;
pub mod runner;
pub mod vlasov_pic;
pub mod wavefield;

pub use error::{Error, Result};
