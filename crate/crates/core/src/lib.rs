//! Non-Bayesian social learning with multiview observations.
//!
//! Agents on a directed network keep one belief per signal type over a finite
//! hypothesis set. Each step they aggregate log-linearly across neighbours and
//! across their own signal types, then apply a Bayesian update per type. The
//! [`analysis`] module predicts the long-run outcome from the model alone.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod learning;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod scenarios;
pub mod signal_model;

pub use error::{Assumption, Error, Result};
