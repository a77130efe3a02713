//! Wiener system identification with generalized orthonormal basis functions.
//!
//! The identification runs in three steps: estimate the best linear
//! approximation (BLA) and its poles, build a GOBF filter bank from those
//! poles, and fit a multivariate polynomial on the bank outputs by linear
//! least squares. [`pipeline::identify`] chains the steps, and
//! [`experiments`] holds the Monte-Carlo studies of the convergence rates.

pub mod bla;
pub mod error;
pub mod experiments;
pub mod export;
pub mod gobf;
pub mod linalg;
pub mod pipeline;
pub mod polymodel;
pub mod ratfun;
pub mod seed;
pub mod signals;

pub use error::{Error, Result, Stage};
