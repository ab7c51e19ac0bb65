//! One-bit quantized estimation of signals with Gaussian-mixture priors.
//!
//! The crate covers the observation model `r = Q(A h + n)` with
//! `A = a ⊗ I_N`, the Bussgang linear MMSE estimator, closed-form and
//! numeric conditional mean estimators, analytic MSE expressions, optimal
//! pilot design, and a Monte-Carlo harness producing NMSE tables.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytics;
pub mod bussgang;
pub mod channel;
pub mod checks;
pub mod cme;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mvn;
pub mod quad;
pub mod stats;

pub use bussgang::{BussgangQuantities, LmmseEstimator};
pub use channel::{PilotKind, QuantizedObservation, SystemModel};
pub use cme::{Estimator, EstimatorKind, EstimatorSpec, NumericCme};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use stats::{CovarianceMatrix, GmmPrior};
