//! Screening wholesale electricity markets for capacity withholding and push-in.
//!
//! The pipeline has three steps. A price-taking dispatch benchmark per unit
//! ([`dispatch`], [`monte_carlo`]) flags hours where observed operation
//! deviates from competitive behaviour. Hourly incentives to deviate
//! ([`supply_curve`], [`incentives`]) combine the supply-curve slope, the
//! owner's hedged net exposure and the unit margin. A regime-switching logit
//! ([`econometrics`]) links the two.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The dynamic programs read more plainly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod calendar;
pub mod costs;
pub mod dispatch;
pub mod econometrics;
pub mod error;
pub mod incentives;
pub mod market_data;
pub mod monte_carlo;
mod panel_io;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod supply_curve;
pub mod synthetic;

pub use error::{Error, Result};
