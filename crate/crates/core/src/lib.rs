//! Support and reachable-set estimation with empirical inverse Christoffel
//! functions, certified by classical VC and PAC-Bayes bounds.
//!
//! The usual flow: build a [`systems::ReachProblem`] (or any
//! [`algorithms::SampleSource`]), run one of [`algorithms::algorithm1`],
//! [`algorithms::algorithm2`] or [`algorithms::algorithm3`], and query the
//! returned [`estimators::SupportEstimate`].

// NaN-rejecting checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

// Pulls in the BLAS/LAPACK link line for ndarray's `blas` feature.
extern crate openblas_src as _;

pub mod algorithms;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod polybasis;
pub mod systems;

pub use error::{Error, Result};
pub use estimators::SupportEstimate;
pub use polybasis::{basis_dimension, MultiIndexBasis};
