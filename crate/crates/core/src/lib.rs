//! Reconstruction of an elliptic source term from Cauchy boundary data by
//! second order asymptotical regularization, on P1 finite elements with the
//! coupled complex boundary method.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod baselines;
pub mod config;
pub mod data_gen;
pub mod error;
pub mod experiments;
pub mod linsolve;
pub mod mesh;
pub mod regularizer;
pub mod sparse;

pub use error::{Error, Result};
