//! Quadrotor aerodynamic model identification with validated prediction
//! intervals.
//!
//! Three interval estimators are provided: an analytic interval for
//! stepwise-identified polynomial models, a bootstrap network ensemble with a
//! separate noise-variance network, and quality-driven networks that output
//! the bounds directly. A Monte Carlo harness checks their coverage under
//! injected sensor noise.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod neuralnet;
pub mod pi;
pub mod polyreg;
pub mod presets;
pub mod sci;
pub mod stats;
pub mod target;

pub use error::{Error, Result};
pub use target::Target;
