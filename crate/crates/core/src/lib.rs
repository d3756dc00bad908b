//! Spatial Toeplitz inverse covariance-based clustering (STICC).
//!
//! Groups multivariate point data into `K` clusters. Each point is stacked
//! with its `R - 1` nearest neighbours into a subregion vector, each cluster
//! is a Gaussian whose precision matrix is symmetric block-Toeplitz and
//! sparse, and a penalty `β` discourages a point from taking a different
//! label than its nearest neighbour's subregion.
//!
//! The fit alternates an assignment step (a dynamic program over the
//! nearest-subregion graph) with a per-cluster Toeplitz graphical lasso
//! solved by ADMM.

pub mod assigner;
pub mod baselines;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dataset;
pub mod em;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod synthgen;
pub mod tgl;

pub use error::{Result, SticcError};
