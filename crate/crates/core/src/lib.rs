//! Multilevel Ensemble Transform Particle Filter.
//!
//! The crate is split along the pipeline of a filtering run:
//!
//! - [`transport`]: exact discrete optimal-transport solvers (monotone 1D
//!   coupling, min-cost-flow transportation LP, Hungarian assignment) and
//!   localisation tapers.
//! - [`models`]: the stochastic test systems, keyed Brownian increments and
//!   Euler–Maruyama propagation of coupled fine/coarse ensembles.
//! - [`filter`]: the single-level ensemble transform particle filter.
//! - [`multilevel`]: level/sample schedules, the fine/coarse multilevel
//!   coupling and the telescoping estimator.
//! - [`metrics`]: RMSE and variance diagnostics plus the operation ledger.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filter;
pub mod metrics;
pub mod models;
pub mod multilevel;
pub mod transport;

pub use error::{Error, Result};
