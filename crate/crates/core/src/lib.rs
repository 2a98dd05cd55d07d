//! Disturbance-aware minimum-lap-time planning for a single-track race car.
//!
//! The crate covers the whole pipeline: track geometry, the vehicle and tire
//! model, tire identification from telemetry, covariance propagation, constraint
//! back-offs, the collocation planner with its interior-point solver, Monte
//! Carlo validation and lap metrics.

pub mod ad;
pub mod config;
pub mod metrics;
pub mod error;
pub mod montecarlo;
pub mod track;
pub mod tracks;
pub mod backoff;
pub mod planner;
pub mod telemetry;
pub mod tirefit;
pub mod uncertainty;
pub mod vehicle;

pub use error::{Error, Result};
