//! Numerical laboratory for conformal symplectic dynamics.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod report;
pub mod sampling;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
