//! Optimal control of a semilinear elliptic equation with exponential
//! nonlinearity and point sources, on two-dimensional P1 meshes.

// NaN-rejecting guards are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod estimates;
pub mod fem;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod pde;
pub mod sequences;

pub use error::{Error, Result};
