//! Feature importance curves across unconditional quantiles for a
//! pre-trained regression model, with test-based pruning.
//!
//! The importance of feature `j` at level `τ` is the derivative of the
//! marginal `τ`-quantile of `Y` under a small shift of `X_j`. Given fitted
//! values and gradients of any [`predict::Predictor`], [`importance`]
//! estimates it from kernel densities of the outcome and of the residuals,
//! with a Hill-type tail extension ([`density`]) for evaluation points outside
//! the residual range. [`pruning`] then zeroes features whose removal leaves
//! the marginal quantile statistically unchanged at every grid level.
//!
//! [`datagen`] reproduces the simulation designs and [`cli`] drives the `uqr`
//! binary.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod density;
pub mod error;
pub mod importance;
pub mod predict;
pub mod pruning;

pub use error::{Error, Result};
