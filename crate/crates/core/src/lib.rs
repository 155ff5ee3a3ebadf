//! Time-difference-of-arrival positioning in the plane.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`] and [`linalg`]: points, anchor sets, the pairwise-difference
//!   operator and the small dense linear algebra everything else is built on.
//! - [`measurement`]: ToA/TDoA simulation under a Gaussian line-of-sight model.
//! - [`linear`] and [`nonlinear`]: the closed-form linear estimators and the
//!   Gauss-Newton estimator.
//! - [`dop`]: the angular-dispersion metric kappa, condition numbers and
//!   dilution-of-precision heatmaps.
//! - [`tracking`]: Kalman / extended Kalman tracking with a Brownian motion
//!   model.
//! - [`evaluation`]: RMSE metrics, built-in scenarios and the simulation
//!   harness.
//! - [`io`]: the on-disk and wire formats shared by the CLI and the service.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dop;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod linear;
pub mod measurement;
pub mod nonlinear;
pub mod tracking;

pub use error::{Result, TdoaError};
pub use estimator::{locate, locate_with_config, EstimatorKind, Fix, FixDiagnostics};
pub use geometry::{AnchorSet, PairIndex, Point};
pub use measurement::{NoiseModel, TdoaVector, ToaSample, SPEED_OF_LIGHT};
