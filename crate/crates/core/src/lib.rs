//! Delayed-projection stochastic solvers for linearly constrained finite-sum
//! problems `min F(x) s.t. Aᵀx = b`.
//!
//! The feasible set is handled through exact orthogonal projections that
//! are applied only on a sparse schedule. Distributed local-update methods
//! arise as the same solvers run on a consensus-lifted problem, where the
//! projection is block averaging.

pub mod error;
pub mod federated;
pub mod metrics;
pub mod par;
pub mod problems;
pub mod projection;
pub mod rng;
pub mod snapshot;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
