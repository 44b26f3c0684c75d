use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forward::PayoffSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverKind {
    /// `F = -r y`.
    EuropeanLinear,
    /// `F = -r y + Ñ (g_t(e^x) - y)⁺`.
    AmericanPenalty,
}

/// Driver `F_t(e^x, y, z, z̃)` of the backward equation. Neither driver
/// depends on `z` or `z̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub kind: DriverKind,
    pub r: f64,
    pub penalty: f64,
    pub payoff: PayoffSpec,
}

impl DriverSpec {
    pub fn european(r: f64, payoff: PayoffSpec) -> Self {
        Self {
            kind: DriverKind::EuropeanLinear,
            r,
            penalty: 0.0,
            payoff,
        }
    }

    /// Penalised driver; `penalty = 0` is accepted and coincides with the
    /// linear driver.
    pub fn american_penalty(r: f64, penalty: f64, payoff: PayoffSpec) -> Result<Self> {
        if !(penalty >= 0.0 && penalty.is_finite()) {
            return Err(invalid("penalty", format!("{penalty} must be >= 0")));
        }
        Ok(Self {
            kind: DriverKind::AmericanPenalty,
            r,
            penalty,
            payoff,
        })
    }

    #[inline]
    pub fn value(&self, t: f64, x: f64, y: f64) -> f64 {
        match self.kind {
            DriverKind::EuropeanLinear => -self.r * y,
            DriverKind::AmericanPenalty => {
                let g = self.payoff.running(t, x, self.r);
                -self.r * y + self.penalty * (g - y).max(0.0)
            }
        }
    }

    /// `∂F/∂y` (one-sided at the kink `y = g`).
    #[inline]
    pub fn dy(&self, t: f64, x: f64, y: f64) -> f64 {
        match self.kind {
            DriverKind::EuropeanLinear => -self.r,
            DriverKind::AmericanPenalty => {
                let g = self.payoff.running(t, x, self.r);
                if g > y {
                    -self.r - self.penalty
                } else {
                    -self.r
                }
            }
        }
    }
}

pub fn driver_eval(spec: &DriverSpec, t: f64, x: f64, y: f64, _z: f64, _z_tilde: f64) -> f64 {
    spec.value(t, x, y)
}

/// One Euler step of the backward equation read forwards:
/// `H = y - F Δt + z ΔB + z̃ ΔW`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn step_target(
    t: f64,
    dt: f64,
    x: f64,
    y: f64,
    z: f64,
    z_tilde: f64,
    db: f64,
    dw: f64,
    spec: &DriverSpec,
) -> f64 {
    y - spec.value(t, x, y) * dt + z * db + z_tilde * dw
}
