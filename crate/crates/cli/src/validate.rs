//! Invariant suite run by `validate`.

use std::io::Write;

use roughbsde::nn::random_gradient_check;
use roughbsde::paths::{build_covariance, factorize};
use roughbsde::report::{sig6};
use roughbsde::rng::derive_seed;
use roughbsde::stats;
use roughbsde::PathSampler;

use crate::config::ExperimentConfig;
use crate::experiments::{CliError, CliResult};

pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.threshold
    }
}

pub fn checks(config: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let model = config.model();
    let grid = config.grid()?;
    let n = grid.steps();
    let h = model.hurst;
    let mut out = Vec::new();

    let cov = build_covariance(&grid, h)?;
    let dim = 2 * n;
    let mut diag: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for a in 0..n {
        let t = grid.time(a + 1);
        diag = diag.max((cov[(n + a) * dim + n + a] - t.powf(2.0 * h)).abs());
        let c = (2.0 * h).sqrt() / (h + 0.5) * t.powf(h + 0.5);
        cross = cross.max((cov[a * dim + n + a] - c).abs());
    }
    out.push(Check { name: "fbm-variance", value: diag, threshold: 1e-8 });
    out.push(Check { name: "cross-covariance", value: cross, threshold: 1e-8 });

    let factor = factorize(&cov)?;
    let recon = factor
        .reconstruct()
        .iter()
        .zip(&cov)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(Check { name: "cholesky-reconstruction", value: recon, threshold: 1e-10 });

    out.push(Check {
        name: "gradient-check",
        value: random_gradient_check(100, derive_seed(config.seed, &[0x4752]))?,
        threshold: 1e-5,
    });

    let sampler = PathSampler::with_factor(model, grid.clone(), factor)?;
    let paths = sampler.sample(config.validate_samples, derive_seed(config.seed, &[0x5641]))?;
    let j = paths.samples();
    // Largest deviation of mean(V_t) from ξ, in standard errors.
    let mut wick: f64 = 0.0;
    for i in 1..=n {
        let v: Vec<f64> = (0..j).map(|s| paths.v(s)[i]).collect();
        let se = stats::std_error(&v);
        if se > 0.0 {
            wick = wick.max((stats::mean(&v) - model.xi).abs() / se);
        }
    }
    out.push(Check { name: "variance-mean-se", value: wick, threshold: 3.0 });
    let spot: Vec<f64> = (0..j)
        .map(|s| paths.x(s)[n].exp())
        .collect();
    let se = stats::std_error(&spot);
    out.push(Check {
        name: "discounted-spot-martingale-se",
        value: if se > 0.0 { (stats::mean(&spot) - model.s0).abs() / se } else { 0.0 },
        threshold: 3.0,
    });
    Ok(out)
}

/// Runs the suite, writes `validate.csv`, and fails if any check fails.
pub fn validate(config: &ExperimentConfig) -> CliResult<Vec<std::path::PathBuf>> {
    let results = checks(config)?;
    let hash = config.hash();
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("validate.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "check,value,threshold,pass,seed,config")?;
    let mut failed = Vec::new();
    for c in &results {
        writeln!(
            out,
            "{},{},{},{},{},{hash}",
            c.name,
            sig6(c.value),
            sig6(c.threshold),
            c.passed(),
            config.seed
        )?;
        eprintln!("{:<32} {:>12} < {:<8} {}", c.name, sig6(c.value), sig6(c.threshold), if c.passed() { "ok" } else { "FAIL" });
        if !c.passed() {
            failed.push(c.name);
        }
    }
    out.flush()?;
    if failed.is_empty() {
        Ok(vec![path])
    } else {
        Err(CliError::Numerical(format!("invariant checks failed: {}", failed.join(", "))))
    }
}
