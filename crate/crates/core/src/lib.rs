//! Laplace-transform specification tests for the innovation law of vector
//! multiplicative error models.

pub mod bootstrap;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod matrix;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod vmem;

pub use error::{Error, Result};
