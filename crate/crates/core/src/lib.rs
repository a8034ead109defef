//! Solver library for a heterogeneous-agent economy with idiosyncratic
//! capital-return risk and flat taxes on labor income, capital income and
//! consumption.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod equilibrium;
pub mod error;
pub mod household;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod tax_optimizer;
pub mod transition;
pub mod wealth;

pub use error::{Error, Result};
