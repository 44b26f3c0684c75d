use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rough Bergomi parameters with a flat forward variance curve.
///
/// `xi` is the flat forward variance, `r` the risk-free rate. The spot enters
/// the dynamics through the discounted log-price `x0 = ln(s0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hurst: f64,
    pub eta: f64,
    pub rho: f64,
    pub xi: f64,
    pub r: f64,
    pub s0: f64,
}

impl ModelParams {
    /// The setup used for every rough Bergomi experiment: H = 0.07, η = 1.9,
    /// ρ = -0.9, ξ = 0.09, r = 0.05, S₀ = 100.
    pub fn rough_bergomi_reference() -> Self {
        Self {
            hurst: 0.07,
            eta: 1.9,
            rho: -0.9,
            xi: 0.09,
            r: 0.05,
            s0: 100.0,
        }
    }

    /// Markovian backtest: same as the reference setup with ρ = η = 0, i.e.
    /// Black-Scholes with σ = √ξ.
    pub fn markovian_backtest() -> Self {
        Self {
            rho: 0.0,
            eta: 0.0,
            ..Self::rough_bergomi_reference()
        }
    }

    pub fn x0(&self) -> f64 {
        self.s0.ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst <= 0.5) {
            return Err(invalid("hurst", format!("{} not in (0, 1/2]", self.hurst)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("{} must be >= 0", self.eta)));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(invalid("rho", format!("{} not in [-1, 1]", self.rho)));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(invalid("xi", format!("{} must be >= 0", self.xi)));
        }
        if !self.r.is_finite() {
            return Err(invalid("r", "must be finite"));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(invalid("s0", format!("{} must be > 0", self.s0)));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::rough_bergomi_reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_params_validate() {
        ModelParams::rough_bergomi_reference().validate().unwrap();
        ModelParams::markovian_backtest().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let p = ModelParams::default();
        assert!(ModelParams { hurst: 0.0, ..p }.validate().is_err());
        assert!(ModelParams { hurst: 0.6, ..p }.validate().is_err());
        assert!(ModelParams { rho: -1.1, ..p }.validate().is_err());
        assert!(ModelParams { xi: -0.1, ..p }.validate().is_err());
        assert!(ModelParams { s0: 0.0, ..p }.validate().is_err());
        assert!(ModelParams { hurst: 0.5, ..p }.validate().is_ok());
    }
}
