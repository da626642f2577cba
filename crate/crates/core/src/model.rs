use crate::error::{Error, Result};
use crate::forward_variance::ForwardVarianceCurve;

/// Rough Bergomi parameters together with spot and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub xi0: ForwardVarianceCurve,
    pub hurst: f64,
    pub rho: f64,
    pub eta: f64,
    pub s0: f64,
    pub r: f64,
}

impl ModelParams {
    pub fn new(xi0: ForwardVarianceCurve, hurst: f64, rho: f64, eta: f64, s0: f64, r: f64) -> Self {
        ModelParams { xi0, hurst, rho, eta, s0, r }
    }

    /// Checks the scalar ranges. η = 0 is accepted (deterministic variance).
    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return Err(Error::domain(format!("H must lie in (0, 1/2), got {}", self.hurst)));
        }
        if !(self.rho > -1.0 && self.rho <= 0.0) {
            return Err(Error::domain(format!("rho must lie in (-1, 0], got {}", self.rho)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::domain(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::domain(format!("s0 must be positive, got {}", self.s0)));
        }
        if !self.r.is_finite() {
            return Err(Error::domain("rate must be finite"));
        }
        Ok(())
    }
}
