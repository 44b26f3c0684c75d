//! `roughbsde`: batch pricing experiments under rough Bergomi volatility.
//!
//! Exit codes: 0 success, 1 numerical failure (divergence, ill-conditioning,
//! failed invariant, i/o), 2 configuration error.

mod config;
mod experiments;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use experiments::CliResult;

#[derive(Parser)]
#[command(name = "roughbsde", version, about = "Deep backward pricing of puts under rough Bergomi volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment selected by the config's `scheme` field.
    Run(Common),
    /// Train the deep scheme for every strike and write run/summary CSVs.
    Price(Common),
    /// Monte Carlo European and CRR American reference prices.
    Reference(Common),
    /// European prices for each grid size in `convergence_steps`.
    Convergence(Common),
    /// Evaluate a trained European network over simulated variance histories.
    PathStudy(Common),
    /// Check covariance, gradient and martingale invariants.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file with flat `key = value` fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set runs=5 --set strikes=[100.0]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (beats the config field).
    #[arg(short, long, env = "ROUGHBSDE_OUTPUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated strikes.
    #[arg(long, value_delimiter = ',')]
    strikes: Option<Vec<f64>>,
    /// Run independent runs one after another.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(r) = self.runs {
            overrides.push(format!("runs={r}"));
        }
        if let Some(ks) = &self.strikes {
            let list: Vec<String> = ks.iter().map(|k| format!("{k:?}")).collect();
            overrides.push(format!("strikes=[{}]", list.join(",")));
        }
        if self.sequential {
            overrides.push("parallel=false".into());
        }
        let mut config = ExperimentConfig::load(self.config.as_deref(), &overrides)?;
        if let Some(dir) = &self.out {
            config.output_dir = dir.clone();
        }
        Ok(config)
    }
}

fn execute(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Run(c) => experiments::run(&c.load()?),
        Command::Price(c) => experiments::price(&c.load()?),
        Command::Reference(c) => experiments::reference(&c.load()?),
        Command::Convergence(c) => experiments::convergence(&c.load()?),
        Command::PathStudy(c) => experiments::study(&c.load()?),
        Command::Validate(c) => validate::validate(&c.load()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("roughbsde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
