//! Storage and swing option valuation: intrinsic bang-bang optimization,
//! rolling-intrinsic Monte Carlo over a mean-reverting forward curve, and
//! closed-form time-value asymptotics.

pub mod analytic;
pub mod curves;
pub mod error;
pub mod intrinsic;
pub mod process;
pub mod rolling;

pub use error::{Error, Result};
