//! Flood-loss regression from insurance-claims tables.
//!
//! The crate covers the full modelling loop: claims ingestion and
//! preprocessing ([`claims`]), missing-value imputation ([`imputation`]),
//! design-matrix construction ([`features`]), the rainfall covariate
//! ([`rainfall`]), two regressors ([`gbt`], [`gp`]), parametric bias correction
//! by CDF matching ([`dist`]), evaluation metrics ([`metrics`]) and the
//! backtest protocols that tie them together ([`backtest`]).

pub mod backtest;
pub mod claims;
pub mod dist;
pub mod error;
pub mod features;
pub mod gbt;
pub mod gp;
pub mod imputation;
pub mod metrics;
pub mod optim;
pub mod quadrature;
pub mod rainfall;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
