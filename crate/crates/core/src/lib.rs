//! Variance-reduced and communication-efficient solvers for regularized
//! empirical risk minimization, plus distributed mean estimation.
//!
//! Everything is generic over the [`Scalar`] trait (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod cocoa;
pub mod dataio;
pub mod error;
pub mod federated;
pub mod linalg;
pub mod losses;
pub mod meanest;
pub mod ms2gd;
pub mod quadperturb;
pub mod rng;
pub mod scalar;
pub mod trace;
pub mod vr_serial;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = dataio::SparseDataset<f64>;
pub type Problem<'a> = losses::Problem<'a, f64>;
