//! Joint pricing, production and quadratic hedging for a price-setting
//! newsvendor whose demand depends on a mean-reverting traded asset.

pub mod calibration;
pub mod error;
pub mod hedging;
pub mod instances;
pub mod newsvendor;
pub mod numeric;
pub mod optimizer;
pub mod processes;
pub mod rng;
pub mod strategy;

pub use error::{Error, Result};
