//! Bounds, confidence intervals and specification tests for the welfare
//! effects of a tuition voucher in a nonparametric discrete choice model.
//!
//! Demand is observed at two price vectors only: without the voucher and at
//! the status-quo amount. Average willingness to pay (AB), average government
//! cost (AC) and average surplus (AS) are bounded by linear programs over
//! piecewise-constant demand on a finite partition of the price paths
//! ([`baseline`]), or over polynomial demand families ([`parametric`]).

pub mod baseline;
pub mod data_io;
pub mod error;
pub mod inference;
pub mod lp;
pub mod model;
pub mod money;
pub mod oracle;
pub mod parametric;
pub mod partition;
pub mod result;

pub use error::{Error, Result};
pub use money::Money;
