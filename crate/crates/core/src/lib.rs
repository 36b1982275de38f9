//! Continuous-variable no-signaling Bell behaviors built from Gaussian
//! mixtures, their CFRD Bell inequalities, covariance matrices and the
//! Robertson-Schrödinger uncertainty relation as a post-quantumness witness.

pub mod behaviors;
pub mod cfrd;
pub mod error;
pub mod measures;
pub mod montecarlo;
pub mod rswitness;
pub mod scan;

pub use error::{Error, Result};
