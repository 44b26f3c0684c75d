use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

/// Volterra kernels driving the fractional variance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `K(r) = √(2H) r^(H - 1/2)`, H in (0, 1/2].
    RiemannLiouville { hurst: f64 },
    /// `K(r) = r^(α - 1) / Γ(α)`, α in (1/2, 1).
    PowerLaw { alpha: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::RiemannLiouville { hurst } if !(hurst > 0.0 && hurst <= 0.5) => {
                Err(invalid("hurst", format!("{hurst} not in (0, 1/2]")))
            }
            KernelSpec::PowerLaw { alpha } if !(alpha > 0.5 && alpha < 1.0) => {
                Err(invalid("alpha", format!("{alpha} not in (1/2, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value at lag `r > 0`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::RiemannLiouville { hurst } => (2.0 * hurst).sqrt() * r.powf(hurst - 0.5),
            KernelSpec::PowerLaw { alpha } => r.powf(alpha - 1.0) / gamma(alpha),
        }
    }
}
