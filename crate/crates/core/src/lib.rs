//! Volatility forecasting with dynamic network log-ARCH models.
//!
//! The crate builds financial networks from panels of stock returns,
//! estimates univariate and network log-ARCH models, runs rolling-window
//! out-of-sample backtests, and evaluates and combines the resulting
//! forecasts.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod data;
pub mod domain;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod network;
pub mod network_arch;
mod par;
pub mod rng;
pub mod simulate;
pub mod univariate;

pub use domain::{
    validate_panel, EdgeWeightMatrix, Field, ForecastConstant, ForecastMeta, ForecastTable,
    LogVolPanel, NetworkFit, Normalization, ReturnPanel, UnivariateFit, ValidatedPanel, WeightKind,
};
pub use error::{ErrorClass, NetArchError, Result};
