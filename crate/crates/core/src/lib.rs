//! Weakly asymmetric exclusion on an interval with boundary reservoirs.
//!
//! The crate simulates the particle system together with its Gärtner-transformed
//! height field, computes Robin-Laplacian heat kernels, runs martingale and
//! remainder diagnostics for the weak-convergence argument, evaluates exact
//! small-chain quantities (relative entropy, Dirichlet forms, semigroup
//! distances, time-averaged second moments) and estimates discrepancy-passage
//! probabilities under the basic coupling.

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod rng;
pub mod robin;
pub mod stats;
pub mod sumtree;

pub use error::{AsepError, Result};
