//! End-to-end acceptance checks against the published reference numbers.
//!
//! Runs as a plain binary (no libtest harness) so the verdict lines always
//! reach the console. Every criterion prints exactly one line starting with
//! `criterion N: PASS` or `criterion N: FAIL`; a failing criterion does not
//! abort the run, and the process exits zero once every criterion has been
//! evaluated. Infrastructure errors (invalid config, divergence) still panic.
//!
//! `ROUGHBSDE_ACCEPTANCE_SMOKE=1` shrinks every budget so the harness itself
//! can be exercised in a minute; its verdicts are not meaningful.

use std::io::Write;
use std::time::Instant;

use roughbsde::nn::random_gradient_check;
use roughbsde::paths::{build_covariance, factorize};
use roughbsde::reference::{black_scholes_put, crr_american_put, mc_european_put_with};
use roughbsde::report::{write_losses, write_runs, write_summary};
use roughbsde::solver::{solve_with_sampler, Sampling, TargetEvaluator, TerminalPayoff};
use roughbsde::study::{path_study, HistoryMode};
use roughbsde::{stats, GridSpec, ModelParams, PathSampler, PayoffSpec, Scheme, SchemeConfig, SolveResult};

const STRIKES: [f64; 4] = [90.0, 100.0, 110.0, 120.0];
const STEPS: usize = 20;

const TABLE1: [f64; 4] = [4.9535, 7.8061, 12.1940, 18.1699];
const TABLE4_PENALTY: [f64; 4] = [5.5113, 9.6672, 15.4882, 22.6069];
const TABLE4_REFLECT: [f64; 4] = [5.5497, 9.6867, 15.5020, 22.5742];
const TABLE5_CRR: [f64; 4] = [5.6168, 9.7980, 15.6720, 22.7501];
const STUDY_MEAN: f64 = 9.9287;
const STUDY_STD: f64 = 0.4240;

struct Budget {
    smoke: bool,
    european_runs: usize,
    european_iterations: usize,
    american_runs: usize,
    /// Runs for the `Ñ = 40` results that only feed the ordering checks.
    ordering_runs: usize,
    american_iterations: usize,
    pool: usize,
    batch: usize,
    mc_samples: usize,
    check_samples: usize,
    study_samples: usize,
}

impl Budget {
    fn from_env() -> Self {
        let smoke = std::env::var("ROUGHBSDE_ACCEPTANCE_SMOKE").is_ok_and(|v| v == "1");
        if smoke {
            Self {
                smoke,
                european_runs: 2,
                european_iterations: 50,
                american_runs: 2,
                ordering_runs: 2,
                american_iterations: 50,
                pool: 4000,
                batch: 2000,
                mc_samples: 20_000,
                check_samples: 20_000,
                study_samples: 500,
            }
        } else {
            Self {
                smoke,
                european_runs: 4,
                european_iterations: 300,
                american_runs: 3,
                ordering_runs: 2,
                american_iterations: 1000,
                pool: 100_000,
                batch: 10_000,
                mc_samples: 1_000_000,
                check_samples: 100_000,
                study_samples: 10_000,
            }
        }
    }

    fn training(&self, runs: usize, iterations: usize, seed: u64) -> SchemeConfig {
        let mut c = SchemeConfig {
            batch_size: self.batch,
            pool_size: self.pool,
            sampling: Sampling::Fixed,
            max_iterations: iterations,
            runs,
            seed,
            ..SchemeConfig::default()
        };
        c.adam.learning_rate = 1e-2;
        c
    }
}

fn verdict(n: usize, pass: bool, detail: impl AsRef<str>, started: Instant) {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "criterion {n}: {} {} [{:.0}s]",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref(),
        started.elapsed().as_secs_f64()
    )
    .unwrap();
    out.flush().unwrap();
}

fn note(text: impl AsRef<str>) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "    {}", text.as_ref()).unwrap();
    out.flush().unwrap();
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn grid() -> GridSpec {
    GridSpec::uniform(1.0, STEPS).unwrap()
}

fn solve_strikes(
    sampler: &PathSampler,
    config: &SchemeConfig,
    scheme: Scheme,
    label: &str,
) -> Vec<SolveResult> {
    STRIKES
        .iter()
        .map(|&k| {
            let t = Instant::now();
            let res = solve_with_sampler(sampler, config, scheme, k).unwrap();
            note(format!(
                "{label} K={k}: mean {:.4} se {:.4} rsd {:.4} ({} runs, {:.0}s)",
                res.mean(),
                res.std_error(),
                res.rsd(),
                res.runs.len(),
                t.elapsed().as_secs_f64()
            ));
            res
        })
        .collect()
}

fn covariance_exactness() {
    let t0 = Instant::now();
    let g = grid();
    let h = ModelParams::rough_bergomi_reference().hurst;
    let n = g.steps();
    let cov = build_covariance(&g, h).unwrap();
    let dim = 2 * n;
    let (mut diag, mut cross) = (0.0f64, 0.0f64);
    for a in 0..n {
        let t = g.time(a + 1);
        diag = diag.max((cov[(n + a) * dim + n + a] - t.powf(2.0 * h)).abs());
        let c = (2.0 * h).sqrt() / (h + 0.5) * t.powf(h + 0.5);
        cross = cross.max((cov[a * dim + n + a] - c).abs());
    }
    let recon = factorize(&cov)
        .unwrap()
        .reconstruct()
        .iter()
        .zip(&cov)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    verdict(
        1,
        diag < 1e-8 && cross < 1e-8 && recon < 1e-10,
        format!("var err {diag:.2e}, cross err {cross:.2e}, cholesky err {recon:.2e}"),
        t0,
    );
}

fn gradient_correctness() {
    let t0 = Instant::now();
    let worst = random_gradient_check(100, 2024).unwrap();
    verdict(2, worst < 1e-5, format!("max relative error {worst:.2e} over 100 networks"), t0);
}

/// Largest `|mean V_t / ξ - 1|` over the grid, its size in standard errors,
/// and the martingale error of `e^{X_T}` in standard errors.
fn moment_errors(params: ModelParams, samples: usize, seed: u64) -> (f64, f64, f64) {
    let g = grid();
    let paths = PathSampler::new(params, g.clone()).unwrap().sample(samples, seed).unwrap();
    let (mut worst, mut worst_se) = (0.0f64, 0.0f64);
    for i in 1..=g.steps() {
        let v = paths.column(roughbsde::paths::PathField::V, i);
        let m = stats::mean(&v);
        worst = worst.max((m / params.xi - 1.0).abs());
        worst_se = worst_se.max((m - params.xi).abs() / stats::std_error(&v));
    }
    let spot: Vec<f64> = (0..samples).map(|j| paths.x(j)[g.steps()].exp()).collect();
    let mart = (stats::mean(&spot) - params.s0).abs() / stats::std_error(&spot);
    (worst, worst_se, mart)
}

fn wick_and_martingale(b: &Budget) {
    let t0 = Instant::now();
    let p = ModelParams::rough_bergomi_reference();
    let (worst, worst_se, mart) = moment_errors(p, b.check_samples, 31);
    let (mild, mild_se, mild_mart) = moment_errors(ModelParams { eta: 0.5, ..p }, b.check_samples, 31);
    verdict(
        3,
        worst < 0.01 && mart < 3.0,
        format!(
            "eta=1.9: max |mean V/xi - 1| {worst:.4} ({worst_se:.2} se), spot martingale {mart:.2} se; \
             eta=0.5: {mild:.4} ({mild_se:.2} se), {mild_mart:.2} se"
        ),
        t0,
    );
}

struct European {
    results: Vec<SolveResult>,
}

fn european_table(b: &Budget) -> European {
    let t0 = Instant::now();
    let p = ModelParams::rough_bergomi_reference();
    let sampler = PathSampler::new(p, grid()).unwrap();
    let mut config = b.training(b.european_runs, b.european_iterations, 101);
    config.retain_networks = true;
    let results = solve_strikes(&sampler, &config, Scheme::European, "european");
    let mut pass = true;
    let mut parts = Vec::new();
    for ((res, &paper), &k) in results.iter().zip(&TABLE1).zip(&STRIKES) {
        let mc = mc_european_put_with(&sampler, k, b.mc_samples, 7).unwrap();
        let se = res.std_error().hypot(mc.std_error);
        let dev = rel(res.mean(), paper);
        let z = (res.mean() - mc.price).abs() / se;
        pass &= dev < 0.03 && z < 3.0;
        parts.push(format!("K={k}: {:.4} vs paper {paper} ({:.2}%), mc {:.4} ({z:.2} se)", res.mean(), 100.0 * dev, mc.price));
    }
    verdict(4, pass, parts.join("; "), t0);
    European { results }
}

fn black_scholes_reduction(b: &Budget) {
    let t0 = Instant::now();
    let p = ModelParams { eta: 0.0, ..ModelParams::rough_bergomi_reference() };
    let sampler = PathSampler::new(p, grid()).unwrap();
    let config = b.training(b.european_runs, b.european_iterations, 202);
    let res = solve_with_sampler(&sampler, &config, Scheme::European, 100.0).unwrap();
    let bs = black_scholes_put(p.s0, 100.0, p.r, p.xi.sqrt(), 1.0);
    let dev = rel(res.mean(), bs);
    verdict(5, dev < 0.015, format!("deep {:.4} vs black-scholes {bs:.4} ({:.2}%)", res.mean(), 100.0 * dev), t0);
}

struct American {
    penalty: Vec<SolveResult>,
    reflect: Vec<SolveResult>,
}

fn markov_american(b: &Budget) -> American {
    let t0 = Instant::now();
    let p = ModelParams::markovian_backtest();
    let sampler = PathSampler::new(p, grid()).unwrap();
    let crr: Vec<f64> = STRIKES
        .iter()
        .map(|&k| crr_american_put(p.s0, k, p.r, p.xi.sqrt(), 1.0, STEPS).unwrap())
        .collect();
    let crr_ok = crr.iter().zip(&TABLE5_CRR).all(|(a, b)| (a - b).abs() < 5e-4);
    let config = b.training(b.american_runs, b.american_iterations, 303);
    let penalty = solve_strikes(&sampler, &config, Scheme::AmericanPenalty { penalty: 10_000.0 }, "markov penalty 10000");
    let reflect = solve_strikes(&sampler, &config, Scheme::AmericanReflect, "markov reflect");
    let mut pass = crr_ok;
    let mut parts = vec![format!("crr(20) matches table: {crr_ok}")];
    for (i, &k) in STRIKES.iter().enumerate() {
        let (a, r) = (penalty[i].mean(), reflect[i].mean());
        pass &= rel(a, crr[i]) < 0.015 && rel(r, crr[i]) < 0.015;
        parts.push(format!(
            "K={k}: crr {:.4}, penalty {a:.4} ({:+.2}%), reflect {r:.4} ({:+.2}%)",
            crr[i],
            100.0 * (a / crr[i] - 1.0),
            100.0 * (r / crr[i] - 1.0)
        ));
    }
    verdict(6, pass, parts.join("; "), t0);
    American { penalty, reflect }
}

fn rough_american(b: &Budget) -> American {
    let t0 = Instant::now();
    let sampler = PathSampler::new(ModelParams::rough_bergomi_reference(), grid()).unwrap();
    let config = b.training(b.american_runs, b.american_iterations, 404);
    let penalty = solve_strikes(&sampler, &config, Scheme::AmericanPenalty { penalty: 10_000.0 }, "rough penalty 10000");
    let reflect = solve_strikes(&sampler, &config, Scheme::AmericanReflect, "rough reflect");
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &k) in STRIKES.iter().enumerate() {
        let (a, r) = (penalty[i].mean(), reflect[i].mean());
        let (da, dr) = (rel(a, TABLE4_PENALTY[i]), rel(r, TABLE4_REFLECT[i]));
        pass &= da < 0.03 && dr < 0.03;
        parts.push(format!(
            "K={k}: penalty {a:.4} vs {} ({:.2}%), reflect {r:.4} vs {} ({:.2}%)",
            TABLE4_PENALTY[i],
            100.0 * da,
            TABLE4_REFLECT[i],
            100.0 * dr
        ));
    }
    verdict(7, pass, parts.join("; "), t0);
    American { penalty, reflect }
}

fn ordering(b: &Budget, european: &European, markov: &American, rough: &American) {
    let t0 = Instant::now();
    let sampler = PathSampler::new(ModelParams::rough_bergomi_reference(), grid()).unwrap();
    let config = b.training(b.ordering_runs, b.american_iterations, 505);
    let weak = solve_strikes(&sampler, &config, Scheme::AmericanPenalty { penalty: 40.0 }, "rough penalty 40");

    let mut failures = Vec::new();
    // Two combined standard errors of slack for the noisy comparisons.
    let above = |hi: &SolveResult, lo_mean: f64, lo_se: f64| hi.mean() + 2.0 * hi.std_error().hypot(lo_se) >= lo_mean;

    let flat = ModelParams::markovian_backtest();
    for (i, &k) in STRIKES.iter().enumerate() {
        let eu = &european.results[i];
        for (name, am) in [("penalty-40", &weak[i]), ("penalty-10000", &rough.penalty[i]), ("reflect", &rough.reflect[i])] {
            if !above(am, eu.mean(), eu.std_error()) {
                failures.push(format!("rough {name} < european at K={k}"));
            }
        }
        let bs = black_scholes_put(flat.s0, k, flat.r, flat.xi.sqrt(), 1.0);
        for (name, am) in [("penalty-10000", &markov.penalty[i]), ("reflect", &markov.reflect[i])] {
            if !above(am, bs, 0.0) {
                failures.push(format!("markov {name} < black-scholes at K={k}"));
            }
        }
        if !above(&rough.penalty[i], weak[i].mean(), weak[i].std_error()) {
            failures.push(format!("penalty price decreases from 40 to 10000 at K={k}"));
        }
    }
    let families: [(&str, &[SolveResult]); 6] = [
        ("european", &european.results),
        ("rough penalty-40", &weak),
        ("rough penalty-10000", &rough.penalty),
        ("rough reflect", &rough.reflect),
        ("markov penalty-10000", &markov.penalty),
        ("markov reflect", &markov.reflect),
    ];
    for (name, results) in families {
        if results.windows(2).any(|w| w[1].mean() <= w[0].mean()) {
            failures.push(format!("{name} not increasing in K"));
        }
    }

    // Terminal values are the payoff itself for every scheme.
    let g = grid();
    let paths = sampler.sample(b.check_samples.min(20_000), 77).unwrap();
    let r = sampler.params().r;
    for &k in &STRIKES {
        for payoff in [PayoffSpec::european_put(k).unwrap(), PayoffSpec::american_put(k).unwrap()] {
            let terminal = TerminalPayoff { payoff, r, maturity: 1.0, step: g.steps() };
            let values = terminal.evaluate(&paths).unwrap();
            let exact = (0..paths.samples()).all(|j| values[j] == (k - (paths.x(j)[g.steps()] + r).exp()).max(0.0));
            if !exact {
                failures.push(format!("terminal value differs from payoff at K={k}"));
            }
        }
    }
    let detail = if failures.is_empty() {
        "american >= european, penalty nondecreasing in N, prices increasing in K, terminal values exact".to_string()
    } else {
        failures.join("; ")
    };
    verdict(8, failures.is_empty(), detail, t0);
}

fn path_dependence(b: &Budget, european: &European) {
    let t0 = Instant::now();
    let sampler = PathSampler::new(ModelParams::rough_bergomi_reference(), grid()).unwrap();
    let res = european.results.iter().find(|r| r.strike == 100.0).unwrap();
    let nets = res.runs[0].networks.as_ref().unwrap();
    let free = path_study(&sampler, nets, 0.5, 100f64.ln(), b.study_samples, 606, HistoryMode::Free).unwrap();
    let pinned = path_study(
        &sampler,
        nets,
        0.5,
        100f64.ln(),
        b.study_samples,
        606,
        HistoryMode::Pinned { level: 0.0825 },
    )
    .unwrap();
    let (dm, ds) = (rel(free.mean, STUDY_MEAN), rel(free.std_dev, STUDY_STD));
    verdict(
        9,
        dm < 0.05 && ds < 0.05,
        format!(
            "free mean {:.4} vs {STUDY_MEAN} ({:.1}%), std {:.4} vs {STUDY_STD} ({:.1}%); pinned mean {:.4} std {:.4}",
            free.mean,
            100.0 * dm,
            free.std_dev,
            100.0 * ds,
            pinned.mean,
            pinned.std_dev
        ),
        t0,
    );
}

fn determinism() {
    let t0 = Instant::now();
    let config = SchemeConfig {
        batch_size: 500,
        pool_size: 500,
        sampling: Sampling::Fixed,
        max_iterations: 100,
        runs: 2,
        parallel: false,
        seed: 7,
        ..SchemeConfig::default()
    };
    let sampler = PathSampler::new(ModelParams::rough_bergomi_reference(), GridSpec::uniform(1.0, 3).unwrap()).unwrap();
    let report = || {
        let results: Vec<SolveResult> = [Scheme::European, Scheme::AmericanPenalty { penalty: 40.0 }, Scheme::AmericanReflect]
            .into_iter()
            .map(|s| solve_with_sampler(&sampler, &config, s, 100.0).unwrap())
            .collect();
        let mut bytes = Vec::new();
        write_runs(&mut bytes, &results, "acceptance").unwrap();
        write_summary(&mut bytes, &results, &config, "acceptance").unwrap();
        for r in &results {
            write_losses(&mut bytes, r).unwrap();
        }
        bytes
    };
    let (a, b) = (report(), report());
    verdict(10, a == b && !a.is_empty(), format!("{} report bytes, identical: {}", a.len(), a == b), t0);
}

fn main() {
    let budget = Budget::from_env();
    if budget.smoke {
        note("smoke budget: verdicts below are not meaningful");
    }
    let start = Instant::now();
    covariance_exactness();
    gradient_correctness();
    wick_and_martingale(&budget);
    let european = european_table(&budget);
    black_scholes_reduction(&budget);
    let markov = markov_american(&budget);
    let rough = rough_american(&budget);
    ordering(&budget, &european, &markov, &rough);
    path_dependence(&budget, &european);
    determinism();
    note(format!("acceptance finished in {:.0}s", start.elapsed().as_secs_f64()));
}
