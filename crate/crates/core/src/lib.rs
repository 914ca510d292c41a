//! Regularized Hadamard expansion of two-point functions on curved
//! backgrounds, computed by solving transport equations along geodesics and
//! null generators.

pub mod dirac;
pub mod error;
pub mod expansion;
pub mod geometry;
pub mod harness;
pub mod parallel;
pub mod regularization;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
