//! Exact equilibrium law, heavy-traffic asymptotics and discrete-event
//! simulation for the index `L` of the server engaged by an arriving customer
//! in an M/M/∞ system whose servers are ranked `S_1, S_2, ...` and where every
//! arrival takes the lowest-indexed idle server.
//!
//! Time is measured in mean service times, so the single model parameter
//! `lambda` is the ratio of the arrival rate to the service rate. All
//! logarithms are natural.

pub mod analytic;
pub mod asymptotics;
mod error;
pub mod quadrature;
pub mod simulator;

pub use error::{ModelError, Result};

use serde::{Deserialize, Serialize};

/// Offered load of the system (arrival rate over service rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    lambda: f64,
}

impl ModelParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(ModelError::param(
                "lambda",
                format!("must be positive and finite, got {lambda}"),
            ));
        }
        Ok(Self { lambda })
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `ceil(lambda + 10 sqrt(lambda) + 50)`; survival beyond this index is
    /// negligible for every load the crate is exercised at.
    pub fn default_l_max(&self) -> usize {
        (self.lambda + 10.0 * self.lambda.sqrt() + 50.0).ceil() as usize
    }
}
