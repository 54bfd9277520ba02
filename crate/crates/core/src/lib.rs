//! Joint transmit-covariance and RIS coefficient optimization for multi-cell
//! MIMO-OFDM broadcast channels with I/Q imbalance.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`]: scenario description, validation and the key-value file format.
//! - [`channel`]: geometry, fading and the RIS-dependent effective channel.
//! - [`impairment`]: widely linear I/Q-imbalance transforms and the real-domain
//!   channel/noise model (plus its affine-in-RIS form used by the optimizer).
//! - [`metrics`]: rates, energy efficiency and utilities.
//! - [`ris`]: RIS coefficient state, feasibility sets, projections and
//!   mode-switching partitions.
//! - [`surrogate`]: concave minorizers of the rate in the covariances and in the
//!   RIS coefficients, with analytic gradients.
//! - [`solver`]: projected-gradient inner solvers, Dinkelbach, and the
//!   alternating majorization-minimization driver.
//! - [`harness`]: Monte Carlo trials, campaigns, CSV output and the CLI.

pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod impairment;
pub mod linalg;
pub mod metrics;
pub mod ris;
pub mod solver;
pub mod surrogate;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<Complex64>;
