#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for singular stochastic p-Laplace and fast diffusion
//! equations on an interval: convex regularization, finite-difference
//! operators, colored Wiener noise, implicit and explicit time steppers,
//! Mosco-type convergence probes and ergodic time averages.

pub mod convex_kernel;
pub mod discrete_space;
pub mod energy;
pub mod ergodics;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod solvers;
pub mod tridiag;

pub use error::{Error, Result};
