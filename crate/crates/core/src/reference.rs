//! Closed-form, lattice and Monte Carlo oracle prices.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::forward::PayoffSpec;
use crate::model::ModelParams;
use crate::paths::{GridSpec, PathSampler};
use crate::rng::derive_seed;
use crate::stats;

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Paths per sampling chunk; bounds memory for large `samples`.
const MC_CHUNK: usize = 50_000;

/// Discounted mean of `(K - S_T)⁺` over simulated paths.
pub fn mc_european_put(
    params: &ModelParams,
    grid: &GridSpec,
    strike: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let sampler = PathSampler::new(*params, grid.clone())?;
    mc_european_put_with(&sampler, strike, samples, seed)
}

pub fn mc_european_put_with(
    sampler: &PathSampler,
    strike: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two paths"));
    }
    let payoff = PayoffSpec::european_put(strike)?;
    let params = sampler.params();
    let grid = sampler.grid();
    let (t, n, r) = (grid.horizon(), grid.steps(), params.r);
    let chunks = samples.div_ceil(MC_CHUNK);
    let values: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = MC_CHUNK.min(samples - c * MC_CHUNK);
            let paths = sampler.sample(size, derive_seed(seed, &[c as u64]))?;
            Ok((0..size)
                .map(|j| (-r * t).exp() * payoff.terminal(paths.x(j)[n], r, t))
                .collect())
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = values.into_iter().flatten().collect();
    Ok(McEstimate {
        price: stats::mean(&all),
        std_error: stats::std_error(&all),
        samples,
    })
}

/// Black-Scholes put. `sigma = 0` or `maturity = 0` gives the discounted
/// intrinsic value.
pub fn black_scholes_put(s0: f64, strike: f64, r: f64, sigma: f64, maturity: f64) -> f64 {
    let df = (-r * maturity).exp();
    let var = sigma * sigma * maturity;
    if var <= 0.0 {
        return (strike * df - s0).max(0.0);
    }
    let sd = var.sqrt();
    let d1 = ((s0 / strike).ln() + r * maturity + 0.5 * var) / sd;
    let d2 = d1 - sd;
    let n = Normal::standard();
    strike * df * n.cdf(-d2) - s0 * n.cdf(-d1)
}

/// Cox-Ross-Rubinstein binomial American put.
pub fn crr_american_put(
    s0: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    maturity: f64,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(invalid("steps", "must be positive"));
    }
    if !(sigma > 0.0) || !(maturity > 0.0) {
        return Err(invalid("sigma", "volatility and maturity must be positive"));
    }
    let dt = maturity / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (r * dt).exp();
    let p = (growth - d) / (u - d);
    if !(0.0 < p && p < 1.0) {
        return Err(invalid("steps", format!("risk-neutral probability {p} outside (0,1)")));
    }
    let disc = 1.0 / growth;
    let mut values: Vec<f64> = (0..=steps)
        .map(|k| (strike - s0 * u.powi(k as i32) * d.powi((steps - k) as i32)).max(0.0))
        .collect();
    for n in (0..steps).rev() {
        for k in 0..=n {
            let cont = disc * (p * values[k + 1] + (1.0 - p) * values[k]);
            let spot = s0 * u.powi(k as i32) * d.powi((n - k) as i32);
            values[k] = cont.max(strike - spot);
        }
    }
    Ok(values[0])
}
