//! Experiment configuration: a flat TOML table, overridable field by field.

use std::path::{Path, PathBuf};

use roughbsde::nn::AdamConfig;
use roughbsde::solver::{Polish, Sampling};
use roughbsde::{GridSpec, ModelParams, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

/// Experiment selected by `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    European,
    AmericanPenalty,
    AmericanReflect,
    McReference,
    Crr,
    Convergence,
    PathStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Experiment,

    pub hurst: f64,
    pub eta: f64,
    pub rho: f64,
    pub xi: f64,
    pub r: f64,
    pub s0: f64,

    pub maturity: f64,
    pub steps: usize,
    pub strikes: Vec<f64>,
    /// Penalty `Ñ` of the penalised American driver.
    pub penalty: f64,

    pub runs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub check_interval: usize,
    pub tolerance: f64,
    pub learning_rate: f64,
    pub sampling: Sampling,
    /// Paths in the reused pool when `sampling = "fixed"`.
    pub pool_size: usize,
    /// Initialise each step from the already trained later step.
    pub warm_start: bool,
    pub polish: Polish,
    /// Upper bound on the penalty seen by Adam; the polish uses the full one.
    pub adam_penalty_cap: Option<f64>,
    /// Run independent training runs concurrently.
    pub parallel: bool,

    pub mc_samples: usize,
    /// Paths for the statistical invariant checks of `validate`.
    pub validate_samples: usize,
    pub crr_steps: usize,
    /// Grid sizes of the refinement study.
    pub convergence_steps: Vec<usize>,

    pub study_time: f64,
    pub study_spot: f64,
    pub study_samples: usize,
    /// Common `V(t)` for the pinned-history variant; omitted to skip it.
    pub study_pinned_variance: Option<f64>,

    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelParams::rough_bergomi_reference();
        let train = SchemeConfig::default();
        Self {
            scheme: Experiment::European,
            hurst: model.hurst,
            eta: model.eta,
            rho: model.rho,
            xi: model.xi,
            r: model.r,
            s0: model.s0,
            maturity: 1.0,
            steps: 20,
            strikes: vec![90.0, 100.0, 110.0, 120.0],
            penalty: 10_000.0,
            runs: train.runs,
            seed: train.seed,
            batch_size: train.batch_size,
            max_iterations: train.max_iterations,
            check_interval: train.check_interval,
            tolerance: train.tolerance,
            learning_rate: train.adam.learning_rate,
            sampling: train.sampling,
            pool_size: train.pool_size,
            warm_start: train.warm_start,
            polish: train.polish,
            adam_penalty_cap: train.adam_penalty_cap,
            parallel: train.parallel,
            mc_samples: 1_000_000,
            validate_samples: 100_000,
            crr_steps: 20,
            convergence_steps: vec![5, 10, 20],
            study_time: 0.5,
            study_spot: 100.0,
            study_samples: 10_000,
            study_pinned_variance: Some(0.0825),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Configuration problems; the CLI maps these to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order, then
    /// validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override `{item}` is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Hash of every setting that affects results; the output location does not.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        roughbsde::report::config_hash(&c)
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            hurst: self.hurst,
            eta: self.eta,
            rho: self.rho,
            xi: self.xi,
            r: self.r,
            s0: self.s0,
        }
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::uniform(self.maturity, self.steps).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn training(&self) -> SchemeConfig {
        SchemeConfig {
            batch_size: self.batch_size,
            check_interval: self.check_interval,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            runs: self.runs,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            seed: self.seed,
            sampling: self.sampling,
            pool_size: self.pool_size,
            parallel: self.parallel,
            retain_networks: false,
            warm_start: self.warm_start,
            polish: self.polish,
            adam_penalty_cap: self.adam_penalty_cap,
        }
    }

    /// The training scheme for the solver experiments.
    pub fn solver_scheme(&self) -> Option<Scheme> {
        match self.scheme {
            Experiment::European => Some(Scheme::European),
            Experiment::AmericanPenalty => Some(Scheme::AmericanPenalty {
                penalty: self.penalty,
            }),
            Experiment::AmericanReflect => Some(Scheme::AmericanReflect),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |e: roughbsde::Error| ConfigError(e.to_string());
        self.model().validate().map_err(err)?;
        self.grid()?;
        self.training().validate().map_err(err)?;
        if self.strikes.is_empty() || self.strikes.iter().any(|k| !(*k > 0.0)) {
            return Err(ConfigError("strikes: need at least one positive strike".into()));
        }
        if !(self.penalty >= 0.0) {
            return Err(ConfigError("penalty: must be >= 0".into()));
        }
        if self.mc_samples < 2 || self.validate_samples < 2 {
            return Err(ConfigError("mc_samples/validate_samples: need at least two paths".into()));
        }
        if self.crr_steps == 0 {
            return Err(ConfigError("crr_steps: must be positive".into()));
        }
        if !(self.study_spot > 0.0) || self.study_samples < 2 {
            return Err(ConfigError("study_spot/study_samples: must be positive".into()));
        }
        Ok(())
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.model(), ModelParams::rough_bergomi_reference());
    }

    #[test]
    fn overrides_are_typed() {
        let c = ExperimentConfig::load(
            None,
            &[
                "runs=3".into(),
                "strikes=[100.0]".into(),
                "scheme=american-reflect".into(),
                "sampling=fixed".into(),
                "eta=0.0".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.strikes, vec![100.0]);
        assert_eq!(c.scheme, Experiment::AmericanReflect);
        assert_eq!(c.sampling, Sampling::Fixed);
        assert_eq!(c.eta, 0.0);
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(ExperimentConfig::load(None, &["nonsense=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["hurst=0.7".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["strikes=[]".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["runs".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["runs=-1".into()]).is_err());
    }
}
