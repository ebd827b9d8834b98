//! Sparse tangent portfolios.
//!
//! Given expected returns `μ` and covariance `Σ`, find a portfolio with at
//! most `k` non-zero weights and the largest Sharpe ratio `μᵀw/√(wᵀΣw)`.
//! The main heuristic ([`select::select_oscar`]) solves the unconstrained
//! tangent problem once, ranks assets by the magnitude of the
//! Cholesky-transformed weights `|Lᵀŵ|`, and re-solves on the top `k`.
//! Four classic baselines and an exhaustive-search oracle are provided for
//! comparison, together with the metrics used to compare them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod market;
pub mod metrics;
pub mod oracle;
pub mod select;
pub mod spd;
pub mod synth;
pub mod tangent;

pub use error::{Error, Result};
pub use market::{MomentEstimate, PricePanel, ReturnPanel};
pub use metrics::BenchRecord;
pub use oracle::OracleResult;
pub use select::{Heuristic, SelectionOrder, SparsePortfolio};
pub use spd::CholeskyFactor;
pub use synth::{Structure, SynthSpec};
pub use tangent::{Portfolio, SharpeValue};
