//! Feature-aware temporal modulation for tabular models under temporal
//! distribution shift.

pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod model;
pub mod modulation;
pub mod numeric;
pub mod power;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
