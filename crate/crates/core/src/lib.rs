//! Pricing of finite-maturity margin-call stock loans under Black-Scholes-Merton
//! dynamics.
//!
//! The optimal exit boundary is found by marching a Volterra integral
//! equation forward in time-to-maturity; contract values then follow from a
//! closed-form integral representation. A Cox-Ross-Rubinstein tree is
//! included as an independent check.

// NaN inputs must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binomial;
pub mod cli;
pub mod error;
pub mod ie_solver;
pub mod kernels;
pub mod margincall;
pub mod model;
pub mod nonrecourse;
pub mod par;

pub use binomial::{european_tree_value, mc_tree_value, nr_tree_boundary_bracket, nr_tree_value, TreeSpec};
pub use error::{Error, Result};
pub use ie_solver::BoundaryCurve;
pub use kernels::{gauss_laguerre, KernelContext, QuadratureRule, RebateFn};
pub use margincall::{service_fee, ExerciseState, MarginCallPricer, PriceQuote};
pub use model::{terminal_exit_price, DimensionlessConstants, GridSpec, LoanSpec, MarketParams};
pub use nonrecourse::{NonRecoursePricer, Rebate};
