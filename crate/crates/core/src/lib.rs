//! Numerical laboratory for the two-penalty thin obstacle problem on the upper
//! half-ball: a convex energy solver, Almgren/Weiss/Monneau diagnostics,
//! blow-up fitting and free-boundary stratification.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod fields;
pub mod freeboundary;
pub mod geometry;
pub mod linalg;
pub mod manufactured;
pub mod pipeline;
pub mod poly;
pub mod solver;
pub mod taylor;
pub mod verify;

pub use error::{Error, Result};

/// A point in `R^n`, `n ≤ 3`; entries past the dimension are ignored and `x_n`
/// sits at index `n − 1`.
pub type Point = [f64; 3];
