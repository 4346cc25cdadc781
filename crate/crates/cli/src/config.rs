use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dvrl_core::nn::OptimizerKind;
use dvrl_core::{DvrlConfig, PredictorInit, PredictorKind, TaskKind};

use crate::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dvrl,
    Random,
    Loo,
    ShapleyTmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Warm,
    Cold,
    Persistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::adam(),
        }
    }
}

/// Everything one invocation needs. Loaded from `--config`, then
/// overridden field by field from the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskArg,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub label_column: String,
    pub categorical: Vec<String>,
    pub method: Method,
    pub dvrl: DvrlConfig,
    pub tmc_permutations: usize,
    /// `None` uses the default relative tolerance; `0` never truncates.
    pub tmc_tolerance: Option<f64>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub fraction_step: f64,
    pub max_fraction: f64,
    pub ratio: Option<f64>,
    pub sigma: Option<f64>,
    pub validation_sizes: Vec<usize>,
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskArg::Classification,
            train: None,
            validation: None,
            test: None,
            label_column: "label".into(),
            categorical: Vec::new(),
            method: Method::Dvrl,
            dvrl: DvrlConfig::default(),
            tmc_permutations: 100,
            tmc_tolerance: None,
            output: None,
            seed: 0,
            fraction_step: 0.05,
            max_fraction: 0.5,
            ratio: None,
            sigma: None,
            validation_sizes: Vec::new(),
            trace: None,
        }
    }
}

/// Flags shared by every data subcommand. Each one overrides the matching
/// `--config` field when given.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Comma-separated categorical column names.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines file receiving one record per outer iteration.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub fraction_step: Option<f64>,
    #[arg(long)]
    pub max_fraction: Option<f64>,

    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub inner_iterations: Option<usize>,
    #[arg(long)]
    pub predictor_batch: Option<usize>,
    #[arg(long)]
    pub valuation_batch: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub predictor_lr: Option<f64>,
    #[arg(long)]
    pub estimator_lr: Option<f64>,
    #[arg(long, value_enum)]
    pub predictor_init: Option<InitArg>,
    #[arg(long)]
    pub pretrain_iterations: Option<usize>,
    /// Hidden widths of an MLP predictor; omit for logistic regression.
    #[arg(long, value_delimiter = ',')]
    pub predictor_hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub predictor_optimizer: Option<OptimizerArg>,
    #[arg(long, value_delimiter = ',')]
    pub estimator_hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub estimator_optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub plateau_patience: Option<usize>,

    #[arg(long)]
    pub tmc_permutations: Option<usize>,
    #[arg(long)]
    pub tmc_tolerance: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.task, self.task);
        set(&mut cfg.train, self.train.clone().map(Some));
        set(&mut cfg.validation, self.validation.clone().map(Some));
        set(&mut cfg.test, self.test.clone().map(Some));
        set(&mut cfg.label_column, self.label_column.clone());
        set(&mut cfg.categorical, self.categorical.clone());
        set(&mut cfg.method, self.method);
        set(&mut cfg.output, self.out.clone().map(Some));
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.trace, self.trace.clone().map(Some));
        set(&mut cfg.fraction_step, self.fraction_step);
        set(&mut cfg.max_fraction, self.max_fraction);
        set(&mut cfg.tmc_permutations, self.tmc_permutations);
        set(&mut cfg.tmc_tolerance, self.tmc_tolerance.map(Some));

        let d = &mut cfg.dvrl;
        set(&mut d.outer_iterations, self.outer_iterations);
        set(&mut d.inner_iterations, self.inner_iterations);
        set(&mut d.predictor_batch, self.predictor_batch);
        set(&mut d.valuation_batch, self.valuation_batch);
        set(&mut d.window, self.window);
        set(&mut d.predictor_lr, self.predictor_lr);
        set(&mut d.estimator_lr, self.estimator_lr);
        set(&mut d.pretrain_iterations, self.pretrain_iterations);
        set(&mut d.estimator_hidden, self.estimator_hidden.clone());
        set(&mut d.plateau_patience, self.plateau_patience.map(Some));
        set(&mut d.predictor_optimizer, self.predictor_optimizer.map(Into::into));
        set(&mut d.estimator_optimizer, self.estimator_optimizer.map(Into::into));
        if let Some(init) = self.predictor_init {
            d.predictor_init = match init {
                InitArg::Warm => PredictorInit::Warm,
                InitArg::Cold => PredictorInit::Cold,
                InitArg::Persistent => PredictorInit::Persistent,
            };
        }
        if let Some(hidden) = &self.predictor_hidden {
            d.predictor = match (cfg.task, hidden.is_empty()) {
                (TaskArg::Classification, true) => PredictorKind::Logistic,
                (TaskArg::Classification, false) => PredictorKind::MlpClassifier { hidden: hidden.clone() },
                (TaskArg::Regression, _) => PredictorKind::MlpRegressor { hidden: hidden.clone() },
            };
        }
        // one seed drives the whole run
        d.seed = cfg.seed;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Checks fields common to all data subcommands.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dvrl
            .validate()
            .map_err(|e| match e {
                dvrl_core::Error::Config { field, reason } => ConfigError::new(format!("dvrl.{field}"), reason),
                other => ConfigError::new("dvrl", other.to_string()),
            })?;
        if self.dvrl.predictor.task() != TaskKind::from(self.task) {
            return Err(ConfigError::new(
                "dvrl.predictor",
                format!("predictor does not match task {:?}", self.task),
            ));
        }
        if self.output.is_none() {
            return Err(ConfigError::new("output", "an output directory is required (--out)"));
        }
        if !(self.fraction_step > 0.0 && self.fraction_step.is_finite()) {
            return Err(ConfigError::new("fraction_step", "must be > 0"));
        }
        if !(self.max_fraction > 0.0 && self.max_fraction <= 1.0) {
            return Err(ConfigError::new("max_fraction", "must lie in (0, 1]"));
        }
        if self.method == Method::ShapleyTmc && self.tmc_permutations == 0 {
            return Err(ConfigError::new("tmc_permutations", "must be >= 1"));
        }
        for (field, path) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(ConfigError::new(field, format!("{} is not a readable file", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn require(&self, field: &'static str) -> Result<&Path, ConfigError> {
        let path = match field {
            "train" => &self.train,
            "validation" => &self.validation,
            "test" => &self.test,
            _ => unreachable!("unknown path field {field}"),
        };
        path.as_deref()
            .ok_or_else(|| ConfigError::new(field, format!("--{field} is required for this subcommand")))
    }

    pub fn output_dir(&self) -> &Path {
        self.output.as_deref().expect("validated output")
    }
}
