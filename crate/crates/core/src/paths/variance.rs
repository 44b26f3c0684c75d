use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::paths::{GridSpec, KernelSpec};

/// Rough Bergomi variance `V_t = ξ exp(η Ŵ_t - η²/2 t^(2H))` at the given
/// times. The Wick correction uses the exact variance `t^(2H)`.
pub fn bergomi_variance(w_hat: &[f64], times: &[f64], params: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; w_hat.len()];
    bergomi_variance_into(w_hat, times, params, &mut out);
    out
}

pub(crate) fn bergomi_variance_into(
    w_hat: &[f64],
    times: &[f64],
    params: &ModelParams,
    out: &mut [f64],
) {
    let two_h = 2.0 * params.hurst;
    let half_eta2 = 0.5 * params.eta * params.eta;
    for ((v, &wh), &t) in out.iter_mut().zip(w_hat).zip(times) {
        let var = if t > 0.0 { t.powf(two_h) } else { 0.0 };
        *v = params.xi * (params.eta * wh - half_eta2 * var).exp();
    }
}

/// Rough Heston parameters: `V_0`, mean reversion speed `λ`, level `θ`,
/// vol-of-vol `ζ` and kernel exponent `α` of `K(r) = r^(α-1)/Γ(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughHestonParams {
    pub v0: f64,
    pub lambda: f64,
    pub theta: f64,
    pub zeta: f64,
    pub alpha: f64,
}

/// Explicit Volterra-Euler scheme for the rough Heston variance,
///
/// `V_{i+1} = V_0 + Σ_{j≤i} K(t_{i+1} - t_j) [λ(θ - V⁺_j) Δt + ζ √V⁺_j ΔW_j]`,
///
/// returning the truncated path `V⁺ = max(V, 0)` at all grid points.
pub fn rough_heston_variance(
    grid: &GridSpec,
    params: &RoughHestonParams,
    dw: &[f64],
) -> Result<Vec<f64>> {
    let kernel = KernelSpec::PowerLaw {
        alpha: params.alpha,
    };
    kernel.validate()?;
    if !(params.v0 >= 0.0) {
        return Err(invalid("v0", "must be >= 0"));
    }
    if !(params.theta >= 0.0) {
        return Err(invalid("theta", "must be >= 0"));
    }
    let n = grid.steps();
    if dw.len() < n {
        return Err(crate::Error::ShapeMismatch {
            expected: n,
            got: dw.len(),
        });
    }
    let dt = grid.dt();
    let times = grid.times();
    let mut v = vec![0.0; n + 1];
    let mut increments = vec![0.0; n];
    v[0] = params.v0;
    for i in 0..n {
        let vp = v[i].max(0.0);
        increments[i] = params.lambda * (params.theta - vp) * dt + params.zeta * vp.sqrt() * dw[i];
        let next: f64 = (0..=i)
            .map(|j| kernel.value(times[i + 1] - times[j]) * increments[j])
            .sum();
        v[i + 1] = (params.v0 + next).max(0.0);
    }
    Ok(v)
}
