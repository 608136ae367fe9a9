//! Instance-level label-noise toolkit.
//!
//! Computes importance weights of `l`-appearance instances, simulates how
//! loss correction, label smoothing and peer loss behave on a memorized
//! instance, and checks closed-form tail bounds against exact binomial
//! oracles and Monte-Carlo estimates.

pub mod bounds;
pub mod error;
pub mod freqmodel;
pub mod mcsim;
pub mod memorize;
pub mod noise;
pub mod numeric;
pub mod treatments;

pub use error::{Error, Result};
