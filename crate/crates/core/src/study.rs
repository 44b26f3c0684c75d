//! Path-dependence and grid-refinement experiments built on trained networks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::nn::StepNetworks;
use crate::paths::{GridSpec, PathSampler};
use crate::solver::{solve_with_sampler, Scheme, SchemeConfig};
use crate::stats;

/// How the variance history is treated when evaluating `u(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum HistoryMode {
    /// Use every simulated `(W, Ŵ)` history as drawn.
    Free,
    /// Overwrite the last `Ŵ` entry of each history so that every trajectory
    /// ends at the same variance `V(t) = level`; earlier entries are kept.
    Pinned { level: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStudyReport {
    pub step: usize,
    pub time: f64,
    pub log_spot: f64,
    pub mode: HistoryMode,
    /// `u` per trajectory, in sampling order.
    pub values: Vec<f64>,
    /// Simulated `V(t)` per trajectory, before any pinning.
    pub terminal_variance: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// Evaluates the trained step network nearest `time` at `x = log_spot` on
/// `samples` simulated histories.
pub fn path_study(
    sampler: &PathSampler,
    networks: &[StepNetworks],
    time: f64,
    log_spot: f64,
    samples: usize,
    seed: u64,
    mode: HistoryMode,
) -> Result<PathStudyReport> {
    let grid = sampler.grid();
    let step = grid.nearest_index(time);
    if step == 0 || step >= grid.steps() {
        return Err(invalid("time", format!("{time} must map to an interior grid point")));
    }
    let nets = networks
        .iter()
        .find(|n| n.step == step)
        .ok_or_else(|| invalid("networks", format!("no trained networks for step {step}")))?;
    if samples < 2 {
        return Err(invalid("samples", "need at least two trajectories"));
    }
    let params = sampler.params();
    let paths = sampler.sample_until(samples, seed, step)?;
    let t = grid.time(step);

    let pinned_w_hat = match mode {
        HistoryMode::Free => None,
        HistoryMode::Pinned { level } => Some(pinned_fbm_value(params, t, level)?),
    };

    let mut raw = Array2::zeros((samples, 2 * step + 1));
    let mut terminal_variance = Vec::with_capacity(samples);
    for j in 0..samples {
        let mut row = raw.row_mut(j);
        let (w, wh) = (paths.w(j), paths.w_hat(j));
        for a in 0..step {
            row[a] = w[a + 1];
            row[step + a] = wh[a + 1];
        }
        if let Some(v) = pinned_w_hat {
            row[2 * step - 1] = v;
        }
        row[2 * step] = log_spot;
        terminal_variance.push(paths.v(j)[step]);
    }
    let values = nets.value_raw(raw.view())?.to_vec();
    Ok(PathStudyReport {
        step,
        time: t,
        log_spot,
        mode,
        mean: stats::mean(&values),
        std_dev: stats::std_dev(&values),
        values,
        terminal_variance,
    })
}

/// `Ŵ_t` that gives `V_t = level`.
fn pinned_fbm_value(params: &ModelParams, t: f64, level: f64) -> Result<f64> {
    if !(level > 0.0) || !(params.xi > 0.0) {
        return Err(invalid("level", "pinned variance and xi must be positive"));
    }
    if params.eta == 0.0 {
        return Err(invalid("eta", "variance does not depend on the history when eta = 0"));
    }
    let eta = params.eta;
    Ok(((level / params.xi).ln() + 0.5 * eta * eta * t.powf(2.0 * params.hurst)) / eta)
}

/// One row of a grid-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub mean: f64,
    pub rsd: f64,
    pub std_error: f64,
    /// Final loss per time step, averaged over runs.
    pub step_losses: Vec<f64>,
}

/// European prices for each grid size in `step_counts` (ascending).
pub fn convergence_study(
    params: &ModelParams,
    maturity: f64,
    config: &SchemeConfig,
    strike: f64,
    step_counts: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if step_counts.is_empty() || step_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("step_counts", "must be non-empty and strictly ascending"));
    }
    step_counts
        .iter()
        .map(|&n| {
            let grid = GridSpec::uniform(maturity, n)?;
            let sampler = PathSampler::new(*params, grid)?;
            let res = solve_with_sampler(&sampler, config, Scheme::European, strike)?;
            Ok(ConvergenceRow {
                steps: n,
                mean: res.mean(),
                rsd: res.rsd(),
                std_error: res.std_error(),
                step_losses: res.mean_step_losses(),
            })
        })
        .collect()
}
