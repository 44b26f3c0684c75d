use ndarray::array;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::PayoffSpec;
use crate::model::ModelParams;
use crate::nn::StepNetworks;
use crate::paths::{GridSpec, PathSampler};
use crate::rng::derive_seed;
use crate::solver::driver::DriverSpec;
use crate::solver::train::{
    train_step, NextStepValue, PathSource, Sampling, SchemeConfig, StepReport, TargetEvaluator,
    TerminalPayoff,
};
use crate::stats;

/// Which backward scheme to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    European,
    /// Penalised driver with penalty `Ñ`.
    AmericanPenalty { penalty: f64 },
    /// Linear driver, with `Û_i = max(U_i, g_{t_i})` after each step.
    AmericanReflect,
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::European => "european".into(),
            Scheme::AmericanPenalty { penalty } => format!("american-penalty-{penalty}"),
            Scheme::AmericanReflect => "american-reflect".into(),
        }
    }

    fn driver(&self, r: f64, payoff: PayoffSpec) -> Result<DriverSpec> {
        match *self {
            Scheme::European | Scheme::AmericanReflect => Ok(DriverSpec::european(r, payoff)),
            Scheme::AmericanPenalty { penalty } => DriverSpec::american_penalty(r, penalty, payoff),
        }
    }

    fn payoff(&self, strike: f64) -> Result<PayoffSpec> {
        match self {
            Scheme::European => PayoffSpec::european_put(strike),
            _ => PayoffSpec::american_put(strike),
        }
    }
}

/// Output of a single independent run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub price: f64,
    /// Indexed by time step `i = 0..N`.
    pub steps: Vec<StepReport>,
    /// Trained networks by step, when retained.
    pub networks: Option<Vec<StepNetworks>>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub scheme: Scheme,
    pub strike: f64,
    pub runs: Vec<RunResult>,
}

impl SolveResult {
    pub fn prices(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.price).collect()
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.prices())
    }

    pub fn std_dev(&self) -> f64 {
        stats::std_dev(&self.prices())
    }

    /// Relative standard deviation across runs.
    pub fn rsd(&self) -> f64 {
        stats::rsd(&self.prices())
    }

    /// Standard error of the run mean.
    pub fn std_error(&self) -> f64 {
        stats::std_error(&self.prices())
    }

    /// Final training loss per step, averaged over runs.
    pub fn mean_step_losses(&self) -> Vec<f64> {
        let n = self.runs.first().map(|r| r.steps.len()).unwrap_or(0);
        (0..n)
            .map(|i| stats::mean(&self.runs.iter().map(|r| r.steps[i].final_loss).collect::<Vec<_>>()))
            .collect()
    }
}

/// Runs `config.runs` independent backward passes of `scheme` for the put with
/// strike `strike`.
pub fn solve(
    params: &ModelParams,
    grid: &GridSpec,
    config: &SchemeConfig,
    scheme: Scheme,
    strike: f64,
) -> Result<SolveResult> {
    config.validate()?;
    let sampler = PathSampler::new(*params, grid.clone())?;
    solve_with_sampler(&sampler, config, scheme, strike)
}

pub fn solve_with_sampler(
    sampler: &PathSampler,
    config: &SchemeConfig,
    scheme: Scheme,
    strike: f64,
) -> Result<SolveResult> {
    config.validate()?;
    let payoff = scheme.payoff(strike)?;
    let driver = scheme.driver(sampler.params().r, payoff)?;
    let one = |run: usize| single_run(sampler, config, scheme, &driver, run);
    let runs: Vec<Result<RunResult>> = if config.parallel {
        (0..config.runs).into_par_iter().map(one).collect()
    } else {
        (0..config.runs).map(one).collect()
    };
    Ok(SolveResult {
        scheme,
        strike,
        runs: runs.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

pub fn solve_european(
    params: &ModelParams,
    grid: &GridSpec,
    config: &SchemeConfig,
    strike: f64,
) -> Result<SolveResult> {
    solve(params, grid, config, Scheme::European, strike)
}

pub fn solve_american_penalty(
    params: &ModelParams,
    grid: &GridSpec,
    config: &SchemeConfig,
    strike: f64,
    penalty: f64,
) -> Result<SolveResult> {
    if !(penalty >= 0.0) {
        return Err(invalid("penalty", format!("{penalty} must be >= 0")));
    }
    solve(params, grid, config, Scheme::AmericanPenalty { penalty }, strike)
}

pub fn solve_american_reflect(
    params: &ModelParams,
    grid: &GridSpec,
    config: &SchemeConfig,
    strike: f64,
) -> Result<SolveResult> {
    solve(params, grid, config, Scheme::AmericanReflect, strike)
}

fn single_run(
    sampler: &PathSampler,
    config: &SchemeConfig,
    scheme: Scheme,
    driver: &DriverSpec,
    run: usize,
) -> Result<RunResult> {
    let grid = sampler.grid();
    let params = sampler.params();
    let n = grid.steps();
    let seed = derive_seed(config.seed, &[run as u64]);
    let fixed = match config.sampling {
        Sampling::Fixed => Some(sampler.sample(config.pool_size, derive_seed(seed, &[3]))?),
        Sampling::Fresh => None,
    };
    let floor = match scheme {
        Scheme::AmericanReflect => Some((driver.payoff, params.r)),
        _ => None,
    };
    let terminal = TerminalPayoff {
        payoff: driver.payoff,
        r: params.r,
        maturity: grid.horizon(),
        step: n,
    };

    let mut trained: Vec<StepNetworks> = Vec::with_capacity(n);
    let mut reports: Vec<StepReport> = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let mut nets = StepNetworks::new(i, grid, params, derive_seed(seed, &[1, i as u64]))?;
        if let Some(later) = trained.last().filter(|_| config.warm_start) {
            nets.warm_start_from(later)?;
        }
        let next;
        let target: &dyn TargetEvaluator = if i + 1 == n {
            &terminal
        } else {
            next = NextStepValue {
                nets: trained.last().expect("later step trained first"),
                floor,
            };
            &next
        };
        let source = match &fixed {
            Some(paths) => PathSource::Fixed(paths),
            None => PathSource::Fresh {
                sampler,
                seed: derive_seed(seed, &[2, i as u64]),
            },
        };
        let report = train_step(i, target, &source, &mut nets, driver, config).map_err(|e| match e {
            Error::Divergence { iteration, loss, .. } => Error::Divergence {
                step: i,
                iteration,
                loss,
            },
            other => other,
        })?;
        reports.push(report);
        trained.push(nets);
    }
    trained.reverse();
    reports.reverse();

    let x0 = params.x0();
    let mut price = trained[0].value_raw(array![[x0]].view())?[0];
    if let Scheme::AmericanReflect = scheme {
        price = price.max(driver.payoff.running(0.0, x0, params.r));
    }
    if !price.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            iteration: reports[0].iterations,
            loss: price,
        });
    }
    Ok(RunResult {
        run,
        seed,
        price,
        steps: reports,
        networks: config.retain_networks.then_some(trained),
    })
}
