//! Bayesian input-signal design for quasi-linear stochastic systems.
//!
//! The crate evaluates a pairwise-distance lower bound on the mutual
//! information between parameters and observations using Kalman recursions,
//! optimizes input signals against it, and provides MAP estimation, Monte
//! Carlo error evaluation and a classical averaged D-optimal baseline.

pub mod baseline;
pub mod bounds;
pub mod design;
pub mod error;
pub mod estimation;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod seed;

pub use error::{DesignError, Result};
