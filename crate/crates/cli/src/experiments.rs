//! Experiment drivers: run the library, write CSV reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use roughbsde::reference::{crr_american_put, mc_european_put_with};
use roughbsde::report::{sig6, write_losses, write_runs, write_summary};
use roughbsde::solver::solve_with_sampler;
use roughbsde::study::{convergence_study, path_study, HistoryMode};
use roughbsde::{PathSampler, Scheme, SolveResult};

use crate::config::{ConfigError, Experiment, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// Training divergence, ill-conditioning or a failed invariant.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<roughbsde::Error> for CliError {
    fn from(e: roughbsde::Error) -> Self {
        match e {
            roughbsde::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Executes the experiment named in `config.scheme`.
pub fn run(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    match config.scheme {
        Experiment::European | Experiment::AmericanPenalty | Experiment::AmericanReflect => {
            price(config)
        }
        Experiment::McReference | Experiment::Crr => reference(config),
        Experiment::Convergence => convergence(config),
        Experiment::PathStudy => study(config),
    }
}

/// Trains the selected scheme for every strike.
pub fn price(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let scheme = config.solver_scheme().ok_or_else(|| {
        CliError::Config(format!("scheme {:?} is not a pricing scheme", config.scheme))
    })?;
    let sampler = PathSampler::new(config.model(), config.grid()?)?;
    let training = config.training();
    let results = config
        .strikes
        .iter()
        .map(|&k| {
            let res = solve_with_sampler(&sampler, &training, scheme, k)?;
            eprintln!(
                "{} K={}: mean {} rsd {}",
                scheme.label(),
                sig6(k),
                sig6(res.mean()),
                sig6(res.rsd())
            );
            Ok(res)
        })
        .collect::<CliResult<Vec<SolveResult>>>()?;

    let dir = &config.output_dir;
    let hash = config.hash();
    let mut written = Vec::new();
    let mut out = create(dir, "runs.csv")?;
    write_runs(&mut out, &results, &hash)?;
    out.flush()?;
    written.push(dir.join("runs.csv"));
    let mut out = create(dir, "summary.csv")?;
    write_summary(&mut out, &results, &training, &hash)?;
    out.flush()?;
    written.push(dir.join("summary.csv"));
    for res in &results {
        let name = format!("losses_{}_K{}.csv", scheme.label(), res.strike);
        let mut out = create(dir, &name)?;
        write_losses(&mut out, res)?;
        out.flush()?;
        written.push(dir.join(name));
    }
    Ok(written)
}

/// Monte Carlo European references under the configured model and CRR
/// American prices under the constant-volatility model `σ = √ξ`.
pub fn reference(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let model = config.model();
    let sampler = PathSampler::new(model, config.grid()?)?;
    let hash = config.hash();
    let sigma = model.xi.sqrt();
    let mut out = create(&config.output_dir, "reference.csv")?;
    writeln!(out, "method,K,price,std_error,size,seed,config")?;
    for &k in &config.strikes {
        let mc = mc_european_put_with(&sampler, k, config.mc_samples, config.seed)?;
        writeln!(
            out,
            "mc-european,{},{},{},{},{},{hash}",
            sig6(k),
            sig6(mc.price),
            sig6(mc.std_error),
            mc.samples,
            config.seed
        )?;
        let crr = crr_american_put(model.s0, k, model.r, sigma, config.maturity, config.crr_steps)?;
        writeln!(
            out,
            "crr-american,{},{},0,{},{},{hash}",
            sig6(k),
            sig6(crr),
            config.crr_steps,
            config.seed
        )?;
        eprintln!("K={}: mc {} ± {}, crr {}", sig6(k), sig6(mc.price), sig6(mc.std_error), sig6(crr));
    }
    out.flush()?;
    Ok(vec![config.output_dir.join("reference.csv")])
}

/// European prices over the configured grid sizes.
pub fn convergence(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let hash = config.hash();
    let training = config.training();
    let dir = &config.output_dir;
    let mut summary = create(dir, "convergence.csv")?;
    let mut losses = create(dir, "convergence_losses.csv")?;
    writeln!(summary, "N,K,mean,rsd,std_error,runs,seed,config")?;
    writeln!(losses, "N,K,step,loss")?;
    for &k in &config.strikes {
        let rows = convergence_study(
            &config.model(),
            config.maturity,
            &training,
            k,
            &config.convergence_steps,
        )?;
        for row in rows {
            writeln!(
                summary,
                "{},{},{},{},{},{},{},{hash}",
                row.steps,
                sig6(k),
                sig6(row.mean),
                sig6(row.rsd),
                sig6(row.std_error),
                config.runs,
                config.seed
            )?;
            for (i, l) in row.step_losses.iter().enumerate() {
                writeln!(losses, "{},{},{i},{}", row.steps, sig6(k), sig6(*l))?;
            }
            eprintln!("N={} K={}: mean {} rsd {}", row.steps, sig6(k), sig6(row.mean), sig6(row.rsd));
        }
    }
    summary.flush()?;
    losses.flush()?;
    Ok(vec![dir.join("convergence.csv"), dir.join("convergence_losses.csv")])
}

/// Trains one European run for the first strike, then evaluates `u(t, ln S)`
/// over simulated histories.
pub fn study(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let sampler = PathSampler::new(config.model(), config.grid()?)?;
    let training = roughbsde::SchemeConfig {
        runs: 1,
        retain_networks: true,
        ..config.training()
    };
    let strike = config.strikes[0];
    let res = solve_with_sampler(&sampler, &training, Scheme::European, strike)?;
    let networks = res.runs[0]
        .networks
        .as_ref()
        .expect("networks were retained");
    let log_spot = config.study_spot.ln();
    let study_seed = roughbsde::rng::derive_seed(config.seed, &[0x5354_5544]);
    let mut modes = vec![HistoryMode::Free];
    if let Some(level) = config.study_pinned_variance {
        modes.push(HistoryMode::Pinned { level });
    }

    let hash = config.hash();
    let dir = &config.output_dir;
    let mut values = create(dir, "path_study.csv")?;
    let mut summary = create(dir, "path_study_summary.csv")?;
    writeln!(values, "mode,trajectory,V,u")?;
    writeln!(summary, "mode,K,t,x,mean,std,samples,seed,config")?;
    for mode in modes {
        let rep = path_study(
            &sampler,
            networks,
            config.study_time,
            log_spot,
            config.study_samples,
            study_seed,
            mode,
        )?;
        let tag = match mode {
            HistoryMode::Free => "free".to_string(),
            HistoryMode::Pinned { level } => format!("pinned-{}", sig6(level)),
        };
        for (j, (v, u)) in rep.terminal_variance.iter().zip(&rep.values).enumerate() {
            writeln!(values, "{tag},{j},{},{}", sig6(*v), sig6(*u))?;
        }
        writeln!(
            summary,
            "{tag},{},{},{},{},{},{},{},{hash}",
            sig6(strike),
            sig6(rep.time),
            sig6(log_spot),
            sig6(rep.mean),
            sig6(rep.std_dev),
            rep.values.len(),
            config.seed
        )?;
        eprintln!("{tag}: mean {} std {}", sig6(rep.mean), sig6(rep.std_dev));
    }
    values.flush()?;
    summary.flush()?;
    Ok(vec![dir.join("path_study.csv"), dir.join("path_study_summary.csv")])
}
