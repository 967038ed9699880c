//! Numerical engine for context geometry on finite-dimensional operator algebras.
//!
//! The layers build on each other:
//!
//! - [`operator`]: states, observables, superoperators and dense linear algebra.
//! - [`qlayer`]: GKLS generators, stationary states, spectral gaps, Doeblin
//!   minorization and stationary-state sensitivity.
//! - [`slayer`]: Cartan charges, self-preservation costs and intrinsic metrics.
//! - [`nlayer`]: context graphs, the global action and its self-consistency equations.
//! - [`curvature`]: sensitivity triples, charge transport and loop holonomy.
//!
//! Batch work goes through [`exec`], which runs on rayon when the `parallel`
//! feature is enabled and sequentially otherwise, with identical results.

// `!(x > 0.0)` is written on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod error;
pub mod exec;
pub mod models;
pub mod nlayer;
pub mod numdiff;
pub mod operator;
pub mod qlayer;
pub mod slayer;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Execution;
pub use operator::{CMatrix, DensityOperator, HermitianOperator, RMatrix, Superoperator, SuperoperatorKind, Tolerances};
