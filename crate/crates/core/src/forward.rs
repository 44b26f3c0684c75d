//! Euler scheme for the discounted log-price `X_t = -rt + ln S_t` and the
//! put payoffs written in that coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::paths::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    EuropeanPut,
    AmericanPut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, strike: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(invalid("strike", format!("{strike} must be > 0")));
        }
        Ok(Self { kind, strike })
    }

    pub fn european_put(strike: f64) -> Result<Self> {
        Self::new(PayoffKind::EuropeanPut, strike)
    }

    pub fn american_put(strike: f64) -> Result<Self> {
        Self::new(PayoffKind::AmericanPut, strike)
    }

    /// Terminal payoff `(K - e^{x + rT})⁺`.
    pub fn terminal(&self, x: f64, r: f64, maturity: f64) -> f64 {
        payoff_terminal(x, self, r, maturity)
    }

    /// Exercise value `(K - e^{x + rt})⁺` at time `t`.
    pub fn running(&self, t: f64, x: f64, r: f64) -> f64 {
        payoff_running(t, x, self, r)
    }
}

pub fn payoff_terminal(x: f64, spec: &PayoffSpec, r: f64, maturity: f64) -> f64 {
    (spec.strike - (x + r * maturity).exp()).max(0.0)
}

pub fn payoff_running(t: f64, x: f64, spec: &PayoffSpec, r: f64) -> f64 {
    (spec.strike - (x + r * t).exp()).max(0.0)
}

/// One path of the Euler scheme with left-point variance:
/// `X_{i+1} = X_i - V_i Δt / 2 + √V_i (ρ ΔW_i + √(1-ρ²) ΔB_i)`.
pub(crate) fn euler_row(
    x0: f64,
    rho: f64,
    dt: f64,
    v: &[f64],
    dw: &[f64],
    db: &[f64],
    x: &mut [f64],
) {
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    x[0] = x0;
    for i in 0..dw.len() {
        let vi = v[i].max(0.0);
        x[i + 1] = x[i] - 0.5 * vi * dt + vi.sqrt() * (rho * dw[i] + rho_bar * db[i]);
    }
}

/// Recomputes `X` in place from the stored `V`, `ΔW` and `ΔB`.
pub fn euler_logprice(paths: &mut PathBundle, params: &ModelParams) {
    let points = paths.steps + 1;
    let steps = paths.steps;
    let x0 = params.x0();
    for j in 0..paths.samples {
        let v = &paths.v[j * points..(j + 1) * points];
        let dw = &paths.dw[j * steps..(j + 1) * steps];
        let db = &paths.db[j * steps..(j + 1) * steps];
        let x = &mut paths.x[j * points..(j + 1) * points];
        euler_row(x0, params.rho, paths.dt, v, dw, db, x);
    }
}
