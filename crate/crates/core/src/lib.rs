//! Fluid-antenna relay uplinks: copula-based outage analysis, OP-minimizing
//! choice between amplify-and-forward and decode-and-forward relaying, and
//! sum-rate maximization by closed-form bandwidth allocation plus per-user
//! power control.

pub mod allocator;
pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod mvncdf;
pub mod outage;
pub mod scenario_file;
pub mod stream;

pub use error::{Error, Result};
