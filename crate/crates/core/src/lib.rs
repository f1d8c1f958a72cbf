//! Infinite-horizon stochastic linear-quadratic control with constant
//! coefficients: stabilizability, the generalized algebraic Riccati equation,
//! closed-loop optimal strategies and Monte Carlo verification.

pub mod cli;
pub mod error;
pub mod inhomogeneous;
pub mod linalg;
pub mod montecarlo;
pub mod oracle1d;
pub mod riccati;
pub mod stabilizability;
pub mod stability;

pub use error::{Error, Result};
