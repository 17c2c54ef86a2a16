//! Sample average approximation of CVaR-based variational inequalities.
//!
//! The crate estimates CVaR from samples, solves monotone variational
//! inequalities and linear complementarity problems, evaluates the
//! exponential sample-size bounds, and applies all of it to stochastic
//! traffic equilibria.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cvar;
pub mod error;
pub mod harness;
pub mod lcp;
pub mod par;
pub mod rng;
pub mod routing;
pub mod vi;

pub use cvar::{
    cvar_discrete, cvar_uniform_interval, empirical_cvar, empirical_cvar_lp, CvarEstimate, CvarMethod,
    DiscreteDistribution, RiskLevel, SampleBatch,
};
pub use error::{Error, Result};
pub use par::Execution;
