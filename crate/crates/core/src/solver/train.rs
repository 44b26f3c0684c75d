use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::PayoffSpec;
use crate::nn::{adam_step, AdamConfig, AdamState, StepNetworks};
use crate::paths::{PathBundle, PathSampler};
use crate::rng::derive_seed;
use crate::solver::driver::DriverSpec;
use crate::solver::polish::{polish_output_layers, StepSamples};

/// Gauss-Newton rounds allowed when polishing the output layers.
const POLISH_ROUNDS: usize = 30;

/// Where each training iteration takes its paths from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// A new batch of paths for every iteration.
    Fresh,
    /// One pool of `pool_size` paths per run, shared by every step and walked
    /// in consecutive mini-batches.
    Fixed,
}

/// What happens to the output layers once Adam stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polish {
    /// Keep the last Adam iterate.
    None,
    /// Shift the `U` output bias so the residual has zero mean.
    Intercept,
    /// Re-solve all three output layers by damped Gauss-Newton with the
    /// hidden layers frozen.
    OutputLayers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    /// Trajectories per iteration.
    pub batch_size: usize,
    /// Iterations between loss-convergence checks.
    pub check_interval: usize,
    pub max_iterations: usize,
    /// Stop once the mean loss over a check interval improves by less than
    /// this fraction over the previous interval.
    pub tolerance: f64,
    pub runs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub sampling: Sampling,
    /// Paths in the per-run pool of [`Sampling::Fixed`].
    pub pool_size: usize,
    /// Run independent runs on the rayon pool.
    pub parallel: bool,
    /// Keep the trained step networks in the result.
    pub retain_networks: bool,
    /// Start each step from the trained networks of the following step.
    pub warm_start: bool,
    /// Post-processing of the output layers after Adam, on the whole pool (or
    /// the last fresh batch).
    pub polish: Polish,
    /// Penalty used by Adam when it is below the driver's `Ñ`; a stiff
    /// penalty (`Ñ Δt` in the hundreds) stalls first-order training. The
    /// output-layer polish always uses the full penalty.
    pub adam_penalty_cap: Option<f64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            batch_size: 10_000,
            check_interval: 50,
            max_iterations: 1000,
            tolerance: 1e-3,
            runs: 20,
            adam: AdamConfig::default(),
            seed: 0,
            sampling: Sampling::Fixed,
            pool_size: 100_000,
            parallel: true,
            retain_networks: false,
            warm_start: true,
            polish: Polish::OutputLayers,
            adam_penalty_cap: Some(40.0),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if self.check_interval == 0 {
            return Err(invalid("check_interval", "must be positive"));
        }
        if self.max_iterations < self.check_interval {
            return Err(invalid(
                "max_iterations",
                "must be at least the check interval",
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "must be positive"));
        }
        if self.sampling == Sampling::Fixed && self.pool_size < self.batch_size {
            return Err(invalid("pool_size", "must be at least the batch size"));
        }
        if self.adam_penalty_cap.is_some_and(|c| !(c >= 0.0)) {
            return Err(invalid("adam_penalty_cap", "must be >= 0"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Supplies `Û_{i+1}` on a bundle that covers `t_0..=t_{i+1}`.
pub trait TargetEvaluator {
    fn evaluate(&self, paths: &PathBundle) -> Result<Array1<f64>>;
}

impl<F> TargetEvaluator for F
where
    F: Fn(&PathBundle) -> Result<Array1<f64>>,
{
    fn evaluate(&self, paths: &PathBundle) -> Result<Array1<f64>> {
        self(paths)
    }
}

/// `Û_N = G`: the exact terminal payoff, no network.
#[derive(Debug, Clone, Copy)]
pub struct TerminalPayoff {
    pub payoff: PayoffSpec,
    pub r: f64,
    pub maturity: f64,
    pub step: usize,
}

impl TargetEvaluator for TerminalPayoff {
    fn evaluate(&self, paths: &PathBundle) -> Result<Array1<f64>> {
        Ok((0..paths.samples())
            .map(|j| self.payoff.terminal(paths.x(j)[self.step], self.r, self.maturity))
            .collect())
    }
}

/// `Û_{i+1}` from the trained networks of the following step, optionally
/// floored by the exercise value (reflection scheme).
pub struct NextStepValue<'a> {
    pub nets: &'a StepNetworks,
    pub floor: Option<(PayoffSpec, f64)>,
}

impl TargetEvaluator for NextStepValue<'_> {
    fn evaluate(&self, paths: &PathBundle) -> Result<Array1<f64>> {
        let step = self.nets.step;
        let mut u = self.nets.value(self.nets.inputs(paths).view())?;
        if let Some((payoff, r)) = self.floor {
            let t = paths.times()[step];
            for (j, v) in u.iter_mut().enumerate() {
                *v = v.max(payoff.running(t, paths.x(j)[step], r));
            }
        }
        Ok(u)
    }
}

/// Path supply for [`train_step`].
pub enum PathSource<'a> {
    Fresh { sampler: &'a PathSampler, seed: u64 },
    Fixed(&'a PathBundle),
}

/// Training report of one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub iterations: usize,
    /// Mean loss over the last check interval.
    pub final_loss: f64,
    /// `(iteration, mean loss over the preceding interval)`.
    pub history: Vec<(usize, f64)>,
}

struct Batch {
    inputs: Array2<f64>,
    target: Array1<f64>,
    x: Vec<f64>,
    db: Vec<f64>,
    dw: Vec<f64>,
}

fn make_batch(
    paths: &PathBundle,
    step: usize,
    nets: &StepNetworks,
    target: &dyn TargetEvaluator,
) -> Result<Batch> {
    let n = paths.samples();
    Ok(Batch {
        inputs: nets.inputs(paths),
        target: target.evaluate(paths)?,
        x: (0..n).map(|j| paths.x(j)[step]).collect(),
        db: (0..n).map(|j| paths.db(j)[step]).collect(),
        dw: (0..n).map(|j| paths.dw(j)[step]).collect(),
    })
}

/// Fits `(U_i, Z_i, Z̃_i)` by Adam on the empirical loss
/// `(1/J) Σ_j |Û_{i+1} - H(X_{t_i}, U_i, Z_i, Z̃_i, ΔB, ΔW)|²`.
pub fn train_step(
    step: usize,
    target: &dyn TargetEvaluator,
    source: &PathSource<'_>,
    nets: &mut StepNetworks,
    driver: &DriverSpec,
    config: &SchemeConfig,
) -> Result<StepReport> {
    config.validate()?;
    if nets.step != step {
        return Err(invalid("nets", format!("networks for step {} used at step {step}", nets.step)));
    }
    let draw = |iteration: usize, nets: &StepNetworks| -> Result<Batch> {
        match source {
            PathSource::Fresh { sampler, seed } => {
                let paths = sampler.sample_until(
                    config.batch_size,
                    derive_seed(*seed, &[iteration as u64]),
                    step + 1,
                )?;
                make_batch(&paths, step, nets, target)
            }
            PathSource::Fixed(paths) => {
                if paths.steps() <= step {
                    return Err(invalid("paths", format!("bundle ends before t_{}", step + 1)));
                }
                make_batch(paths, step, nets, target)
            }
        }
    };
    let fresh = matches!(source, PathSource::Fresh { .. });
    let mut batch = draw(0, nets)?;
    let (t, dt) = match source {
        PathSource::Fresh { sampler, .. } => (sampler.grid().time(step), sampler.grid().dt()),
        PathSource::Fixed(paths) => (paths.times()[step], paths.dt()),
    };
    let t_next = t + dt;

    let growth = 1.0 + driver.r * dt;
    let mean = batch.target.mean().unwrap_or(0.0);
    let sd = batch.target.std(0.0);
    nets.set_output_scaling(mean, sd, t_next, growth);
    if !nets.warm {
        nets.center_outputs(batch.inputs.view())?;
    }

    let mut adam_u = AdamState::new(&nets.u, config.adam);
    let mut adam_z = AdamState::new(&nets.z, config.adam);
    let mut adam_zt = AdamState::new(&nets.z_tilde, config.adam);

    let mut history = Vec::new();
    let mut interval_sum = 0.0;
    let mut interval_len = 0usize;
    let mut previous: Option<f64> = None;
    let mut last_loss = f64::NAN;
    let mut iterations = 0;

    let full_driver = driver;
    let capped = match config.adam_penalty_cap {
        Some(cap) if cap < driver.penalty => DriverSpec { penalty: cap, ..*driver },
        _ => *driver,
    };
    let driver = &capped;
    // A fixed bundle larger than the batch is walked in contiguous chunks.
    let chunks = batch.target.len().div_ceil(config.batch_size);
    for iteration in 0..config.max_iterations {
        if fresh && iteration > 0 {
            batch = draw(iteration, nets)?;
        }
        let lo = (iteration % chunks) * config.batch_size;
        let hi = (lo + config.batch_size).min(batch.target.len());
        let inputs = batch.inputs.slice(s![lo..hi, ..]);
        let acts_u = nets.u.forward_train(inputs)?;
        let acts_z = nets.z.forward_train(inputs)?;
        let acts_zt = nets.z_tilde.forward_train(inputs)?;
        let (ou, oz, ozt) = (acts_u.output(), acts_z.output(), acts_zt.output());

        let n = hi - lo;
        let mut g_u = Array2::zeros((n, 1));
        let mut g_z = Array2::zeros((n, 1));
        let mut g_zt = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for j in 0..n {
            let y = nets.u_shift + nets.u_scale * ou[[j, 0]];
            let z = nets.z_scale * oz[[j, 0]];
            let zt = nets.z_scale * ozt[[j, 0]];
            let (x, db, dw) = (batch.x[lo + j], batch.db[lo + j], batch.dw[lo + j]);
            let h = y - driver.value(t, x, y) * dt + z * db + zt * dw;
            let res = h - batch.target[lo + j];
            loss += res * res;
            let dh_dy = 1.0 - driver.dy(t, x, y) * dt;
            g_u[[j, 0]] = 2.0 * res * dh_dy * nets.u_scale;
            g_z[[j, 0]] = 2.0 * res * db * nets.z_scale;
            g_zt[[j, 0]] = 2.0 * res * dw * nets.z_scale;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                iteration,
                loss,
            });
        }
        let grad_u = nets.u.backward_with(inputs, &acts_u, g_u.view())?;
        let grad_z = nets.z.backward_with(inputs, &acts_z, g_z.view())?;
        let grad_zt = nets.z_tilde.backward_with(inputs, &acts_zt, g_zt.view())?;
        adam_step(&mut nets.u, &grad_u, &mut adam_u)?;
        adam_step(&mut nets.z, &grad_z, &mut adam_z)?;
        adam_step(&mut nets.z_tilde, &grad_zt, &mut adam_zt)?;

        iterations = iteration + 1;
        last_loss = loss;
        interval_sum += loss;
        interval_len += 1;
        if iterations % config.check_interval == 0 {
            let current = interval_sum / interval_len as f64;
            history.push((iterations, current));
            interval_sum = 0.0;
            interval_len = 0;
            if let Some(prev) = previous {
                if prev <= 0.0 || (prev - current) / prev < config.tolerance {
                    break;
                }
            }
            previous = Some(current);
        }
    }
    let mut final_loss = history.last().map(|&(_, l)| l).unwrap_or(last_loss);
    match config.polish {
        Polish::None => {}
        Polish::Intercept => refit_intercept(nets, &batch, full_driver, t, dt, step)?,
        Polish::OutputLayers => {
            let data = StepSamples {
                inputs: batch.inputs.view(),
                target: batch.target.as_slice().expect("contiguous target"),
                x: &batch.x,
                db: &batch.db,
                dw: &batch.dw,
            };
            final_loss = polish_output_layers(nets, &data, full_driver, t, dt, POLISH_ROUNDS)?;
        }
    }
    Ok(StepReport {
        step,
        iterations,
        final_loss,
        history,
    })
}

/// Shifts the `U` output bias until the residual `H - target` averages to
/// zero over `batch`. `H` is increasing in `y` for every supported driver, so
/// Newton on the piecewise-linear mean residual terminates quickly.
fn refit_intercept(
    nets: &mut StepNetworks,
    batch: &Batch,
    driver: &DriverSpec,
    t: f64,
    dt: f64,
    step: usize,
) -> Result<()> {
    let (u, z, zt) = nets.evaluate(batch.inputs.view())?;
    let n = u.len() as f64;
    let mut shift = 0.0;
    for _ in 0..50 {
        let (mut res, mut slope) = (0.0, 0.0);
        for j in 0..u.len() {
            let y = u[j] + shift;
            let x = batch.x[j];
            res += y - driver.value(t, x, y) * dt + z[j] * batch.db[j] + zt[j] * batch.dw[j]
                - batch.target[j];
            slope += 1.0 - driver.dy(t, x, y) * dt;
        }
        let (res, slope) = (res / n, slope / n);
        if !(slope > 0.0) || !res.is_finite() {
            return Err(Error::Divergence { step, iteration: 0, loss: res });
        }
        let delta = res / slope;
        shift -= delta;
        if delta.abs() <= 1e-12 * (1.0 + shift.abs()) {
            break;
        }
    }
    let last = nets.u.layers_mut().last_mut().expect("network has layers");
    last.bias[0] += shift / nets.u_scale;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::paths::GridSpec;

    fn setup(r: f64) -> (PathSampler, GridSpec, ModelParams) {
        let params = ModelParams {
            r,
            ..ModelParams::rough_bergomi_reference()
        };
        let grid = GridSpec::uniform(1.0, 4).unwrap();
        (PathSampler::new(params, grid.clone()).unwrap(), grid, params)
    }

    fn tight() -> SchemeConfig {
        SchemeConfig {
            batch_size: 4000,
            max_iterations: 1000,
            tolerance: 1e-5,
            sampling: Sampling::Fixed,
            pool_size: 4000,
            parallel: false,
            ..SchemeConfig::default()
        }
    }

    fn driver(r: f64) -> DriverSpec {
        DriverSpec::european(r, PayoffSpec::european_put(100.0).unwrap())
    }

    #[test]
    fn constant_target_is_discounted() {
        let (sampler, grid, params) = setup(0.05);
        let paths = sampler.sample(4000, 1).unwrap();
        let target = |p: &PathBundle| Ok(Array1::from_elem(p.samples(), 5.0));
        let mut nets = StepNetworks::new(2, &grid, &params, 2).unwrap();
        train_step(2, &target, &PathSource::Fixed(&paths), &mut nets, &driver(0.05), &tight()).unwrap();
        let u = nets.value(nets.inputs(&paths).view()).unwrap();
        let expected = 5.0 / (1.0 + 0.05 * grid.dt());
        assert!(u.iter().all(|v| (v - expected).abs() < 1e-2), "{}", u[0]);
    }

    #[test]
    fn brownian_increment_target_recovers_z() {
        let (sampler, grid, params) = setup(0.0);
        let paths = sampler.sample(4000, 3).unwrap();
        let a = 2.5;
        let target = |p: &PathBundle| Ok((0..p.samples()).map(|j| a * p.db(j)[1]).collect());
        let mut nets = StepNetworks::new(1, &grid, &params, 4).unwrap();
        train_step(1, &target, &PathSource::Fixed(&paths), &mut nets, &driver(0.0), &tight()).unwrap();
        let (u, z, zt) = nets.evaluate(nets.inputs(&paths).view()).unwrap();
        let mean = |x: &Array1<f64>| x.mean().unwrap();
        assert!((mean(&z) / a - 1.0).abs() < 0.02, "z = {}", mean(&z));
        assert!(mean(&u).abs() < 0.05 && mean(&zt).abs() < 0.05);
    }

    #[test]
    fn measurable_target_is_fitted_pointwise() {
        // Gaussian log-prices: with eta > 0 a handful of extreme paths lie
        // where saturated sigmoids cannot extrapolate a linear target.
        let params = ModelParams {
            r: 0.0,
            eta: 0.0,
            ..ModelParams::rough_bergomi_reference()
        };
        let grid = GridSpec::uniform(1.0, 4).unwrap();
        let sampler = PathSampler::new(params, grid.clone()).unwrap();
        let paths = sampler.sample(4000, 5).unwrap();
        let step = 2;
        let target = |p: &PathBundle| Ok((0..p.samples()).map(|j| p.x(j)[step]).collect());
        let mut nets = StepNetworks::new(step, &grid, &params, 6).unwrap();
        let config = SchemeConfig {
            max_iterations: 10_000,
            tolerance: 1e-9,
            adam: AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
            ..tight()
        };
        let report = train_step(step, &target, &PathSource::Fixed(&paths), &mut nets, &driver(0.0), &config).unwrap();
        let x: Array1<f64> = target(&paths).unwrap();
        let u = nets.value(nets.inputs(&paths).view()).unwrap();
        let mse = (&u - &x).mapv(|d| d * d).mean().unwrap();
        let var = x.var(0.0);
        // Three sigmoid units reproduce the identity over +-4 sd to ~1e-4 of
        // the variance; Adam gets there slowly.
        assert!(mse < 5e-4 * var, "mse {mse} var {var}");
        assert!(report.history.len() >= 2);
    }

    #[test]
    fn rejects_mismatched_step_and_short_bundle() {
        let (sampler, grid, params) = setup(0.0);
        let paths = sampler.sample_until(100, 1, 1).unwrap();
        let target = |p: &PathBundle| Ok(Array1::zeros(p.samples()));
        let mut nets = StepNetworks::new(2, &grid, &params, 1).unwrap();
        let cfg = SchemeConfig { batch_size: 100, ..tight() };
        assert!(train_step(1, &target, &PathSource::Fixed(&paths), &mut nets, &driver(0.0), &cfg).is_err());
        assert!(train_step(2, &target, &PathSource::Fixed(&paths), &mut nets, &driver(0.0), &cfg).is_err());
    }

    #[test]
    fn fresh_sampling_is_deterministic() {
        let (sampler, grid, params) = setup(0.05);
        let cfg = SchemeConfig {
            batch_size: 500,
            max_iterations: 100,
            sampling: Sampling::Fixed,
            ..tight()
        };
        let term = TerminalPayoff {
            payoff: PayoffSpec::european_put(100.0).unwrap(),
            r: 0.05,
            maturity: 1.0,
            step: 4,
        };
        let run = || {
            let mut nets = StepNetworks::new(3, &grid, &params, 7).unwrap();
            let src = PathSource::Fresh { sampler: &sampler, seed: 11 };
            train_step(3, &term, &src, &mut nets, &driver(0.05), &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::default().validate().is_ok());
        assert!(SchemeConfig { batch_size: 0, ..SchemeConfig::default() }.validate().is_err());
        assert!(SchemeConfig { max_iterations: 10, ..SchemeConfig::default() }.validate().is_err());
        assert!(SchemeConfig { tolerance: 0.0, ..SchemeConfig::default() }.validate().is_err());
        assert!(SchemeConfig { runs: 0, ..SchemeConfig::default() }.validate().is_err());
        assert!(SchemeConfig { adam_penalty_cap: Some(-1.0), ..SchemeConfig::default() }
            .validate()
            .is_err());
        assert!(SchemeConfig { pool_size: 10, ..SchemeConfig::default() }.validate().is_err());
    }

    #[test]
    fn intercept_refit_zeroes_mean_residual() {
        let (sampler, grid, params) = setup(0.05);
        let paths = sampler.sample(3000, 9).unwrap();
        let step = 2;
        let payoff = PayoffSpec::american_put(110.0).unwrap();
        let target = |p: &PathBundle| {
            Ok((0..p.samples()).map(|j| payoff.running(0.75, p.x(j)[step + 1], 0.05)).collect())
        };
        for driver in [driver(0.05), DriverSpec::american_penalty(0.05, 40.0, payoff).unwrap()] {
            let config = SchemeConfig {
                max_iterations: 100,
                polish: Polish::Intercept,
                ..tight()
            };
            let mut nets = StepNetworks::new(step, &grid, &params, 3).unwrap();
            train_step(step, &target, &PathSource::Fixed(&paths), &mut nets, &driver, &config).unwrap();
            let (u, z, zt) = nets.evaluate(nets.inputs(&paths).view()).unwrap();
            let g: Array1<f64> = target(&paths).unwrap();
            let (t, dt) = (grid.time(step), grid.dt());
            let mean: f64 = (0..paths.samples())
                .map(|j| {
                    let x = paths.x(j)[step];
                    u[j] - driver.value(t, x, u[j]) * dt + z[j] * paths.db(j)[step] + zt[j] * paths.dw(j)[step]
                        - g[j]
                })
                .sum::<f64>()
                / paths.samples() as f64;
            assert!(mean.abs() < 1e-9, "{mean}");
        }
    }
}
