//! JSON experiment files. A file names a problem and optionally overrides
//! its preset; lists of architectures, learning rates and seeds expand into
//! one [`RunConfig`] per combination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{ArchitectureKind, NetworkConfig, ProductTerms};
use crate::problems::{LossWeights, PdeConstants, ProblemKind, SampleCounts};
use crate::reference::GridResolution;
use crate::train::{LambdaTracking, RunConfig, StopRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

impl ConfigError {
    fn field(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Seeds used when a file names none: five independent trials.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// The file as written. Everything except `problem` is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub problem: Option<ProblemKind>,
    pub architecture: Option<ArchitectureKind>,
    pub architectures: Option<Vec<ArchitectureKind>>,
    pub hidden_layers: Option<usize>,
    pub width: Option<usize>,
    pub product_terms: Option<ProductTerms>,
    pub skip_stride: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub samples: Option<SampleCounts>,
    pub weights: Option<LossWeights>,
    pub constants: Option<PdeConstants>,
    pub learning_rate: Option<f64>,
    pub learning_rates: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub time_budget_secs: Option<f64>,
    pub eval_grid: Option<GridResolution>,
    pub lambda_stride: Option<usize>,
    pub log_every: Option<usize>,
    pub normalize: Option<bool>,
    pub record_timing: Option<bool>,
    pub out_dir: Option<String>,
}

/// Every setting materialized. Serialized as the config echo of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub problem: ProblemKind,
    pub architectures: Vec<ArchitectureKind>,
    pub hidden_layers: usize,
    pub width: usize,
    pub product_terms: ProductTerms,
    pub skip_stride: usize,
    pub seeds: Vec<u64>,
    pub samples: SampleCounts,
    pub weights: LossWeights,
    pub constants: PdeConstants,
    pub learning_rates: Vec<f64>,
    pub stop: StopRule,
    pub eval_grid: GridResolution,
    /// λ_max checkpoint stride; 0 turns tracking off.
    pub lambda_stride: usize,
    pub log_every: usize,
    pub normalize: bool,
    pub record_timing: bool,
    pub out_dir: Option<String>,
}

fn one_or_many<T: Clone>(
    single: Option<T>,
    many: Option<Vec<T>>,
    name: &str,
    plural: &str,
    default: Vec<T>,
) -> Result<Vec<T>> {
    match (single, many) {
        (Some(_), Some(_)) => Err(ConfigError::field(
            plural,
            format!("give either `{name}` or `{plural}`, not both"),
        )),
        (Some(v), None) => Ok(vec![v]),
        (None, Some(v)) if v.is_empty() => Err(ConfigError::field(plural, "must not be empty")),
        (None, Some(v)) => Ok(v),
        (None, None) => Ok(default),
    }
}

impl ExperimentFile {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Fills defaults from the problem preset and checks every field.
    pub fn resolve(self) -> Result<Experiment> {
        let problem = self
            .problem
            .ok_or_else(|| ConfigError::field("problem", "missing required field"))?;
        let preset = problem.preset();
        let d = preset.defaults;
        let stop = match (self.iterations, self.time_budget_secs) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field(
                    "time_budget_secs",
                    "give either `iterations` or `time_budget_secs`, not both",
                ))
            }
            (Some(n), None) => StopRule::Iterations(n),
            (None, Some(s)) => StopRule::TimeBudget(s),
            (None, None) => StopRule::Iterations(d.iterations),
        };
        let exp = Experiment {
            problem,
            architectures: one_or_many(
                self.architecture,
                self.architectures,
                "architecture",
                "architectures",
                vec![d.architecture],
            )?,
            hidden_layers: self.hidden_layers.unwrap_or(d.hidden_layers),
            width: self.width.unwrap_or(d.width),
            product_terms: self.product_terms.unwrap_or_default(),
            skip_stride: self.skip_stride.unwrap_or(2),
            seeds: one_or_many(self.seed, self.seeds, "seed", "seeds", DEFAULT_SEEDS.to_vec())?,
            samples: self.samples.unwrap_or(preset.counts),
            weights: self.weights.unwrap_or(preset.weights),
            constants: self.constants.unwrap_or(preset.constants),
            learning_rates: one_or_many(
                self.learning_rate,
                self.learning_rates,
                "learning_rate",
                "learning_rates",
                vec![d.learning_rate],
            )?,
            stop,
            eval_grid: self.eval_grid.unwrap_or_default(),
            lambda_stride: self.lambda_stride.unwrap_or(0),
            log_every: self.log_every.unwrap_or(RunConfig::DEFAULT_LOG_EVERY),
            normalize: self.normalize.unwrap_or(true),
            record_timing: self.record_timing.unwrap_or(false),
            out_dir: self.out_dir,
        };
        exp.validate()?;
        Ok(exp)
    }
}

impl Experiment {
    pub fn parse(json: &str) -> Result<Self> {
        ExperimentFile::parse(json)?.resolve()
    }

    /// The run for one (architecture, learning rate, seed) combination.
    pub fn run_config(&self, arch: ArchitectureKind, lr: f64, seed: u64) -> RunConfig {
        let mut problem = self.problem.preset();
        problem.counts = self.samples;
        problem.weights = self.weights;
        problem.constants = self.constants;
        let mut network = NetworkConfig::new(
            arch,
            problem.input_dim(),
            self.hidden_layers,
            self.width,
            1,
        );
        network.product_terms = self.product_terms;
        network.skip_stride = self.skip_stride;
        RunConfig {
            problem,
            network,
            seed,
            learning_rate: lr,
            stop: self.stop,
            log_every: self.log_every,
            normalize: self.normalize,
            eval_grid: self.eval_grid,
            lambda: (self.lambda_stride > 0).then(|| LambdaTracking::every(self.lambda_stride)),
            record_timing: self.record_timing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_grid.space < 2 || self.eval_grid.time < 2 {
            return Err(ConfigError::field("eval_grid", "needs at least 2 points per axis"));
        }
        for &arch in &self.architectures {
            for &lr in &self.learning_rates {
                let cfg = self.run_config(arch, lr, self.seeds[0]);
                cfg.validate().map_err(|e| match e {
                    crate::train::TrainError::Config { field, reason } => {
                        ConfigError::field(field, reason)
                    }
                    other => ConfigError::Parse(other.to_string()),
                })?;
            }
        }
        Ok(())
    }

    /// Number of individual training runs.
    pub fn run_count(&self) -> usize {
        self.architectures.len() * self.learning_rates.len() * self.seeds.len()
    }
}
