//! Differentially private tabular synthesis with a sparsified sequential GAN.
//!
//! The generator is a chain of sub-generators, one per column, each reading
//! the previously generated columns and a fresh noise coordinate. A group-lasso
//! penalty on the input rows of every sub-generator drives unused dependencies
//! to zero, and the critic is trained with DP-SGD under a Rényi accountant.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod privacy;
pub mod sem;
pub mod train;

pub use error::{Error, Result};
