//! Out-of-zone leakage prediction for a circular radio dynamic zone.
//!
//! Sensors on the zone boundary measure per-transmitter received power.
//! From those measurements the crate fits the path-loss exponent and the
//! shadowing correlation model, then predicts received power at unmonitored
//! boundary locations with multi-source ordinary Kriging.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod kriging;
pub mod plot;
pub mod propagation;
pub mod shadowing;
pub mod stats;

pub use error::{Error, Result};
pub use estimation::{EstimationOptions, FittedParams, VariogramSource};
pub use geometry::{PolarLocation, ZoneConfig, ZoneLayout};
pub use propagation::{MeasurementSet, PropagationParams};
pub use shadowing::{CorrelationParams, CovarianceMatrix, FieldPoint, MatrixForm};
