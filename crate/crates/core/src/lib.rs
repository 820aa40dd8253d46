//! Multi-band terahertz spectrum allocation: channel and blockage modeling,
//! max-min throughput problems over equal or adaptive sub-band widths, and
//! penalty-relaxed successive convex approximation solvers with baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod absorption;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod model;
pub mod scenario;
pub mod solver;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
