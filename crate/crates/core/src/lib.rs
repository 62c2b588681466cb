//! Evolving zero-intelligence market simulator.
//!
//! Agents trade one asset through a frequent batch auction; periodically a
//! selection mechanism removes unprofitable agents and replaces them with
//! offspring of the survivors. The analysis and calibration modules estimate
//! price spectra, GARCH volatility, parameter marginals and heavy-tailed SDE
//! models of parameter evolution from the simulated output.

pub mod agents;
pub mod analysis;
pub mod book;
pub mod calibration;
pub mod config;
pub mod error;
pub mod optim;
pub mod selection;
pub mod simulation;
pub mod stochastic;

pub use error::{Error, Result};
