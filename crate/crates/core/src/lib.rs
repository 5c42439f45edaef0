//! Mini-batch stochastic subgradient projection for finite-sum composite
//! problems with many functional constraints.
//!
//! Solves `min (1/N) Σ (f_i(x) + g_i(x))` subject to `h_j(x) <= 0` for
//! `j = 1..m` and `x ∈ Y`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod reference;
pub mod rng;
pub mod runlog;
pub mod sampling;
pub mod solver;
pub mod stepsize;

pub use error::{Error, Result};
