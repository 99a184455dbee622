//! Blood-bank network simulation toolkit.
//!
//! * [`domain`]: blood groups, components, compatibility, rarity, shelf life.
//! * [`synthgen`]: seeded synthetic banks, users, inventory and donation logs.
//! * [`store`]: partition-keyed table store with a JSON-lines file backend.
//! * [`simengine`]: day-stepped request/donation simulation under three allocation policies.
//! * [`forecast`]: linear, ARIMA and LSTM forecasters for per-bank acceptance ratios.
//! * [`stats`]: acceptance ratio, marginal performance and two-proportion z-tests.

pub mod domain;
pub mod error;
pub mod forecast;
pub mod simengine;
pub mod stats;
pub mod store;
pub mod synthgen;

pub use error::{Error, Result};
