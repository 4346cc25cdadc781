//! Joint training of the predictor and the data value estimator.
//!
//! Each outer iteration samples a valuation batch, draws a Bernoulli
//! selection from the estimator's probabilities, trains the predictor on the
//! selected rows, then moves the estimator along
//! `(mean validation loss − δ) · ∇ log π(s)` and finally refreshes the moving
//! average `δ`. The three updates always happen in that order.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{sample_selection, EstimatorSpec, SelectionVector, ValueEstimator, SELECTION_EPSILON};
use crate::nn::{Gradients, OptimizerKind};
use crate::predictor::{PredictorKind, PredictorModel, PredictorSpec};
use crate::rng::{derive_seed, sample_without_replacement, seeded};

/// How the predictor's parameters are initialised at the start of every
/// outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorInit {
    /// Restart from a model pre-trained (unweighted) on the full training set.
    Warm,
    /// Restart from one fixed random initialisation, without pre-training.
    Cold,
    /// Keep training one model across outer iterations.
    Persistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DvrlConfig {
    pub outer_iterations: usize,
    /// Predictor steps per outer iteration (`N_I`).
    pub inner_iterations: usize,
    /// Predictor mini-batch (`B_p`).
    pub predictor_batch: usize,
    /// Valuation batch (`B_s`).
    pub valuation_batch: usize,
    /// Moving-average window (`T`).
    pub window: usize,
    /// Predictor learning rate (`α`).
    pub predictor_lr: f64,
    /// Estimator learning rate (`β`); zero freezes the estimator.
    pub estimator_lr: f64,
    pub predictor_init: PredictorInit,
    /// Steps for the warm-start pre-training, the final re-weighted fit and
    /// the reference predictors of the experiment protocols.
    pub pretrain_iterations: usize,
    pub predictor: PredictorKind,
    pub predictor_optimizer: OptimizerKind,
    pub estimator_hidden: Vec<usize>,
    pub estimator_optimizer: OptimizerKind,
    /// Stop once `δ` has not reached a new minimum for this many outer
    /// iterations (checked after a `3·T` warm-up).
    pub plateau_patience: Option<usize>,
    pub seed: u64,
}

impl Default for DvrlConfig {
    fn default() -> Self {
        DvrlConfig {
            outer_iterations: 1000,
            inner_iterations: 200,
            predictor_batch: 256,
            valuation_batch: 2000,
            window: 20,
            predictor_lr: 0.001,
            estimator_lr: 0.01,
            predictor_init: PredictorInit::Warm,
            pretrain_iterations: 2000,
            predictor: PredictorKind::Logistic,
            predictor_optimizer: OptimizerKind::adam(),
            estimator_hidden: vec![100, 100],
            estimator_optimizer: OptimizerKind::adam(),
            plateau_patience: None,
            seed: 0,
        }
    }
}

impl DvrlConfig {
    /// Settings for benchmarks of around a thousand rows: smaller batches and
    /// budgets, a single 100-unit estimator layer, and a plain-SGD predictor
    /// restarted from one fixed initialisation each outer iteration.
    pub fn small_scale() -> Self {
        DvrlConfig {
            outer_iterations: 300,
            inner_iterations: 50,
            predictor_batch: 64,
            valuation_batch: 256,
            predictor_lr: 0.3,
            estimator_lr: 0.005,
            predictor_init: PredictorInit::Cold,
            predictor_optimizer: OptimizerKind::Sgd,
            estimator_hidden: vec![100],
            ..DvrlConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        positive("window", self.window)?;
        positive("inner_iterations", self.inner_iterations)?;
        positive("predictor_batch", self.predictor_batch)?;
        positive("outer_iterations", self.outer_iterations)?;
        if self.valuation_batch < self.predictor_batch {
            return Err(Error::config(
                "valuation_batch",
                format!("must be >= predictor_batch ({})", self.predictor_batch),
            ));
        }
        if !(self.predictor_lr.is_finite() && self.predictor_lr > 0.0) {
            return Err(Error::config("predictor_lr", "must be > 0"));
        }
        if !(self.estimator_lr.is_finite() && self.estimator_lr >= 0.0) {
            return Err(Error::config("estimator_lr", "must be >= 0"));
        }
        if self.estimator_hidden.contains(&0) {
            return Err(Error::config("estimator_hidden", "layer widths must be >= 1"));
        }
        if self.plateau_patience == Some(0) {
            return Err(Error::config("plateau_patience", "must be >= 1 when set"));
        }
        Ok(())
    }

    pub fn predictor_spec(&self) -> PredictorSpec {
        PredictorSpec {
            kind: self.predictor.clone(),
            optimizer: self.predictor_optimizer,
            learning_rate: self.predictor_lr,
            batch_size: self.predictor_batch,
            iterations: self.pretrain_iterations,
        }
    }

    pub fn estimator_spec(&self) -> EstimatorSpec {
        EstimatorSpec {
            hidden: self.estimator_hidden.clone(),
            optimizer: self.estimator_optimizer,
            learning_rate: self.estimator_lr,
            epsilon: SELECTION_EPSILON,
        }
    }
}

/// Moving average `δ` of the mean validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTracker {
    delta: f64,
    window: usize,
}

impl BaselineTracker {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("window", "must be >= 1"));
        }
        Ok(BaselineTracker { delta: 0.0, window })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `δ ← (T−1)/T · δ + L̄/T`.
    pub fn update(&mut self, mean_validation_loss: f64) -> Result<()> {
        if !mean_validation_loss.is_finite() {
            return Err(Error::NonFinite("mean validation loss for baseline update".into()));
        }
        let t = self.window as f64;
        self.delta = (t - 1.0) / t * self.delta + mean_validation_loss / t;
        Ok(())
    }
}

/// One outer iteration's trace record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_validation_loss: f64,
    /// `δ` after this iteration's update.
    pub delta: f64,
    pub selected_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Plateau { iteration: usize },
    /// Validation loss went non-finite; traces stop before this iteration.
    Diverged { iteration: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    PredictorUpdate,
    EstimatorUpdate,
    BaselineUpdate,
}

/// Hooks invoked while [`train_dvrl`] runs.
pub trait TrainingObserver {
    fn on_phase(&mut self, _iteration: usize, _phase: Phase) {}
    fn on_record(&mut self, _record: &IterationRecord) {}
}

impl TrainingObserver for () {}

#[derive(Clone, Debug)]
pub struct ValuationResult {
    /// Data value of every training row.
    pub values: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub estimator: ValueEstimator,
    /// Predictor trained on the full training set weighted by `values`.
    pub predictor: PredictorModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReinforceOutcome {
    pub mean_validation_loss: f64,
    pub advantage: f64,
}

/// `(mean_loss − δ) · ∇_φ log π_φ(batch, s)`: the gradient handed to the
/// estimator's optimizer.
pub fn policy_gradient(
    estimator: &ValueEstimator,
    batch: &Dataset,
    selection: &SelectionVector,
    mean_loss: f64,
    delta: f64,
) -> Result<Gradients> {
    let advantage = mean_loss - delta;
    if !advantage.is_finite() {
        return Err(Error::NonFinite(format!("advantage (loss {mean_loss}, delta {delta})")));
    }
    let mut grads = estimator.log_prob_gradient(batch, selection)?;
    grads.scale(advantage);
    if let Some(path) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("policy gradient {path}")));
    }
    Ok(grads)
}

/// Estimator update for one outer iteration. Does not touch `tracker`.
pub fn reinforce_step(
    estimator: &mut ValueEstimator,
    batch: &Dataset,
    selection: &SelectionVector,
    predictor: &PredictorModel,
    validation: &Dataset,
    tracker: &BaselineTracker,
) -> Result<ReinforceOutcome> {
    let mean_validation_loss = predictor.mean_loss(validation)?;
    let grads = policy_gradient(estimator, batch, selection, mean_validation_loss, tracker.delta())?;
    estimator.apply_gradient(&grads)?;
    Ok(ReinforceOutcome {
        mean_validation_loss,
        advantage: mean_validation_loss - tracker.delta(),
    })
}

pub fn train_dvrl(train: &Dataset, validation: &Dataset, config: &DvrlConfig) -> Result<ValuationResult> {
    train_dvrl_observed(train, validation, config, &mut ())
}

pub fn train_dvrl_observed(
    train: &Dataset,
    validation: &Dataset,
    config: &DvrlConfig,
    observer: &mut dyn TrainingObserver,
) -> Result<ValuationResult> {
    let estimator = ValueEstimator::for_dataset(&config.estimator_spec(), train, derive_seed(config.seed, 1))?;
    train_dvrl_from(train, validation, config, estimator, observer)
}

/// As [`train_dvrl_observed`], starting from a caller-supplied estimator.
pub fn train_dvrl_from(
    train: &Dataset,
    validation: &Dataset,
    config: &DvrlConfig,
    mut estimator: ValueEstimator,
    observer: &mut dyn TrainingObserver,
) -> Result<ValuationResult> {
    config.validate()?;
    train.check_schema(validation, "train vs validation")?;
    if validation.is_empty() {
        return Err(Error::Invalid("validation set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }

    let seed = config.seed;
    let spec = config.predictor_spec();
    let init_seed = derive_seed(seed, 2);
    let mut base = PredictorModel::for_dataset(spec.clone(), train, init_seed)?;
    if config.predictor_init == PredictorInit::Warm {
        base.fit(train, derive_seed(seed, 3))?;
        base.reset_optimizer();
    }
    let mut persistent = base.clone();
    let mut tracker = BaselineTracker::new(config.window)?;
    let mut trace = Vec::with_capacity(config.outer_iterations);
    let mut termination = Termination::Completed;
    let mut best_delta = f64::INFINITY;
    let mut since_best = 0usize;
    let all_rows: Vec<usize> = (0..train.len()).collect();

    for iteration in 0..config.outer_iterations {
        let stream = derive_seed(seed, 1_000 + iteration as u64);
        let rows = if config.valuation_batch >= train.len() {
            all_rows.clone()
        } else {
            sample_without_replacement(&mut seeded(stream), train.len(), config.valuation_batch)
        };
        let batch = train.subset(&rows);
        let probabilities = estimator.estimate_values(&batch)?;
        let selection = sample_selection(&probabilities, derive_seed(stream, 1))?;

        let mut predictor = match config.predictor_init {
            PredictorInit::Warm | PredictorInit::Cold => base.clone(),
            PredictorInit::Persistent => persistent.clone(),
        };
        predictor.fit_weighted(
            &batch,
            &selection.as_weights(),
            config.inner_iterations,
            config.predictor_batch,
            derive_seed(stream, 3),
        )?;
        observer.on_phase(iteration, Phase::PredictorUpdate);

        let mean_loss = predictor.mean_loss(validation)?;
        if !mean_loss.is_finite() {
            log::warn!("validation loss diverged at outer iteration {iteration}");
            termination = Termination::Diverged { iteration };
            break;
        }
        let outcome = reinforce_step(&mut estimator, &batch, &selection, &predictor, validation, &tracker)?;
        observer.on_phase(iteration, Phase::EstimatorUpdate);

        tracker.update(outcome.mean_validation_loss)?;
        observer.on_phase(iteration, Phase::BaselineUpdate);

        let record = IterationRecord {
            iteration,
            mean_validation_loss: outcome.mean_validation_loss,
            delta: tracker.delta(),
            selected_fraction: selection.count_selected() as f64 / selection.len() as f64,
        };
        observer.on_record(&record);
        trace.push(record);
        if config.predictor_init == PredictorInit::Persistent {
            persistent = predictor;
        }

        if let Some(patience) = config.plateau_patience {
            if iteration >= 3 * config.window {
                if tracker.delta() < best_delta - 1e-12 {
                    best_delta = tracker.delta();
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        termination = Termination::Plateau { iteration };
                        break;
                    }
                }
            }
        }
    }

    let values = estimator.estimate_values(train)?;
    let mut predictor = PredictorModel::for_dataset(spec, train, init_seed)?;
    predictor.fit_weighted(
        train,
        &values,
        config.pretrain_iterations,
        config.predictor_batch,
        derive_seed(seed, 4),
    )?;
    Ok(ValuationResult {
        values,
        trace,
        termination,
        estimator,
        predictor,
    })
}

/// Data values of `batch` under the trained estimator; no parameters change.
pub fn infer_values(result: &ValuationResult, batch: &Dataset) -> Result<Vec<f64>> {
    result.estimator.estimate_values(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_recursion_examples() {
        let mut t = BaselineTracker::new(20).unwrap();
        assert_eq!(t.delta(), 0.0);
        t.update(2.0).unwrap();
        assert!((t.delta() - 0.1).abs() < 1e-15);

        let mut one = BaselineTracker::new(1).unwrap();
        one.update(3.5).unwrap();
        one.update(0.25).unwrap();
        assert_eq!(one.delta(), 0.25);

        assert!(t.update(f64::NAN).is_err());
        assert!(BaselineTracker::new(0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DvrlConfig::default().validate().is_ok());
        let bad = DvrlConfig {
            valuation_batch: 10,
            predictor_batch: 20,
            ..DvrlConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "valuation_batch"));
        let frozen = DvrlConfig {
            estimator_lr: 0.0,
            ..DvrlConfig::default()
        };
        assert!(frozen.validate().is_ok());
        let neg = DvrlConfig {
            predictor_lr: -1.0,
            ..DvrlConfig::default()
        };
        assert!(neg.validate().is_err());
    }
}
