//! The target-task predictor: a small MLP (or multinomial logistic
//! regression) trained on sample-weighted mini-batches.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{LossKind, MlpParams, OptimizerKind, OptimizerState, OutputActivation};
use crate::rng::{sample_without_replacement, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    /// Softmax regression (no hidden layer).
    Logistic,
    MlpClassifier { hidden: Vec<usize> },
    MlpRegressor { hidden: Vec<usize> },
}

impl PredictorKind {
    pub fn task(&self) -> TaskKind {
        match self {
            PredictorKind::Logistic | PredictorKind::MlpClassifier { .. } => {
                TaskKind::Classification
            }
            PredictorKind::MlpRegressor { .. } => TaskKind::Regression,
        }
    }

    fn hidden(&self) -> &[usize] {
        match self {
            PredictorKind::Logistic => &[],
            PredictorKind::MlpClassifier { hidden } | PredictorKind::MlpRegressor { hidden } => {
                hidden
            }
        }
    }
}

/// Architecture plus default training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Mini-batch size used by [`PredictorModel::fit`].
    pub batch_size: usize,
    /// Step count used by [`PredictorModel::fit`].
    pub iterations: usize,
}

impl PredictorSpec {
    pub fn logistic() -> Self {
        PredictorSpec {
            kind: PredictorKind::Logistic,
            optimizer: OptimizerKind::adam(),
            learning_rate: 0.01,
            batch_size: 256,
            iterations: 1000,
        }
    }

    pub fn loss(&self) -> LossKind {
        match self.kind.task() {
            TaskKind::Classification => LossKind::CrossEntropy,
            TaskKind::Regression => LossKind::Mse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("predictor.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("predictor.batch_size", "must be >= 1"));
        }
        if self.kind.hidden().contains(&0) {
            return Err(Error::config("predictor.hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    LogLoss,
    Mse,
    Rmspe,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy)
    }

    /// Score oriented so that larger is better.
    pub fn as_performance(self, value: f64) -> f64 {
        if self.higher_is_better() {
            value
        } else {
            -value
        }
    }

    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => Metric::Accuracy,
            TaskKind::Regression => Metric::Mse,
        }
    }

    fn task(self) -> TaskKind {
        match self {
            Metric::Accuracy | Metric::LogLoss => TaskKind::Classification,
            Metric::Mse | Metric::Rmspe => TaskKind::Regression,
        }
    }
}

/// Result of a weighted fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitOutcome {
    Updated { steps: usize },
    /// Every weight was zero; parameters were left untouched.
    SkippedAllZeroWeights,
}

#[derive(Clone, Debug)]
pub struct PredictorModel {
    spec: PredictorSpec,
    params: MlpParams,
    optimizer: OptimizerState,
}

impl PredictorModel {
    /// Freshly initialised model (Glorot weights drawn from `seed`).
    pub fn new(spec: PredictorSpec, input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut dims = vec![input_dim];
        dims.extend_from_slice(spec.kind.hidden());
        dims.push(output_dim);
        let output = match spec.kind.task() {
            TaskKind::Classification => OutputActivation::Softmax,
            TaskKind::Regression => OutputActivation::Identity,
        };
        let params = MlpParams::glorot(&dims, output, &mut seeded(seed))?;
        Self::from_params(spec, params)
    }

    /// Model with fixed parameters; the output activation must match the
    /// predictor kind.
    pub fn from_params(spec: PredictorSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        let expected = match spec.kind.task() {
            TaskKind::Classification => OutputActivation::Softmax,
            TaskKind::Regression => OutputActivation::Identity,
        };
        if params.output_activation() != expected {
            return Err(Error::Invalid(format!(
                "{:?} predictor needs {expected:?} output, got {:?}",
                spec.kind,
                params.output_activation()
            )));
        }
        let optimizer = OptimizerState::new(spec.optimizer, spec.learning_rate)?;
        Ok(PredictorModel {
            spec,
            params,
            optimizer,
        })
    }

    /// Model shaped for `data`.
    pub fn for_dataset(spec: PredictorSpec, data: &Dataset, seed: u64) -> Result<Self> {
        if spec.kind.task() != data.task() {
            return Err(Error::Invalid(format!(
                "{:?} predictor cannot fit a {:?} dataset",
                spec.kind,
                data.task()
            )));
        }
        Self::new(spec, data.feature_dim(), data.label_dim(), seed)
    }

    pub fn spec(&self) -> &PredictorSpec {
        &self.spec
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn reset_optimizer(&mut self) {
        self.optimizer.reset();
    }

    /// `iterations` mini-batch steps of
    /// `θ ← θ − lr · (1/B) Σ_m w_m ∇L(f(x_m), y_m)`, where `B` is the
    /// configured `batch_size` even when fewer rows are available.
    ///
    /// Batches of `batch_size` rows are drawn without replacement from
    /// `data`; when `batch_size >= data.len()` every step uses all rows in
    /// order.
    pub fn fit_weighted(
        &mut self,
        data: &Dataset,
        weights: &[f64],
        iterations: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<FitOutcome> {
        self.check_dataset(data)?;
        if weights.len() != data.len() {
            return Err(Error::shape("sample weights", data.len(), weights.len()));
        }
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Invalid(format!("weight {i} = {} outside [0, 1]", weights[i])));
        }
        if batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if weights.iter().all(|&w| w == 0.0) {
            log::warn!("all sample weights are zero; predictor update skipped");
            return Ok(FitOutcome::SkippedAllZeroWeights);
        }

        let mut rng = seeded(seed);
        let full_batch = batch_size >= data.len();
        let all_rows: Vec<usize> = (0..data.len()).collect();
        let loss = self.spec.loss();
        for _ in 0..iterations {
            let rows = if full_batch {
                all_rows.clone()
            } else {
                sample_without_replacement(&mut rng, data.len(), batch_size)
            };
            let x = data.features().select_rows(&rows);
            let y = data.labels().select_rows(&rows);
            let pass = self.params.forward_cached(&x)?;
            let mut grad = loss.logit_gradient(self.params.output_activation(), &pass.output, &y)?;
            let cols = grad.cols();
            for (r, &row) in rows.iter().enumerate() {
                let scale = weights[row] / batch_size as f64;
                grad.as_mut_slice()[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .for_each(|g| *g *= scale);
            }
            let grads = self.params.backward_logits(&pass, &grad)?;
            self.optimizer.step(&mut self.params, &grads)?;
        }
        Ok(FitOutcome::Updated { steps: iterations })
    }

    /// Unweighted training with the spec's own iteration/batch settings.
    pub fn fit(&mut self, data: &Dataset, seed: u64) -> Result<FitOutcome> {
        let ones = vec![1.0; data.len()];
        let (iters, batch) = (self.spec.iterations, self.spec.batch_size);
        self.fit_weighted(data, &ones, iters, batch, seed)
    }

    /// Class probabilities (classification) or real values (regression).
    pub fn predict(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        self.params.forward(features)
    }

    pub fn loss_per_sample(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        self.spec.loss().per_sample(&self.predict(data.features())?, data.labels())
    }

    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        let l = self.loss_per_sample(data)?;
        Ok(l.iter().sum::<f64>() / l.len().max(1) as f64)
    }

    pub fn evaluate(&self, data: &Dataset, metric: Metric) -> Result<f64> {
        self.check_dataset(data)?;
        let predictions = self.predict(data.features())?;
        score(metric, data, &predictions)
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.task() != self.spec.kind.task() {
            return Err(Error::Invalid(format!(
                "dataset task {:?} does not match predictor {:?}",
                data.task(),
                self.spec.kind
            )));
        }
        if data.feature_dim() != self.params.input_dim() {
            return Err(Error::shape("predictor input", self.params.input_dim(), data.feature_dim()));
        }
        if data.label_dim() != self.params.output_dim() {
            return Err(Error::shape("predictor output", self.params.output_dim(), data.label_dim()));
        }
        Ok(())
    }
}

/// Metric of `predictions` against the labels of `data`.
pub fn score(metric: Metric, data: &Dataset, predictions: &DenseMatrix) -> Result<f64> {
    if metric.task() != data.task() {
        return Err(Error::Invalid(format!("metric {metric:?} does not apply to {:?} data", data.task())));
    }
    if data.is_empty() {
        return Err(Error::Invalid("cannot score an empty dataset".into()));
    }
    if predictions.shape() != data.labels().shape() {
        return Err(Error::shape(
            "predictions",
            format!("{:?}", data.labels().shape()),
            format!("{:?}", predictions.shape()),
        ));
    }
    let n = data.len() as f64;
    match metric {
        Metric::Accuracy => {
            let hits = predictions
                .argmax_rows()
                .iter()
                .zip(data.classes())
                .filter(|(p, t)| **p == *t)
                .count();
            Ok(hits as f64 / n)
        }
        Metric::LogLoss => LossKind::CrossEntropy.mean(predictions, data.labels()),
        Metric::Mse => LossKind::Mse.mean(predictions, data.labels()),
        Metric::Rmspe => {
            let targets = data.labels().as_slice();
            let zeros: Vec<usize> = (0..targets.len()).filter(|&i| targets[i] == 0.0).collect();
            if !zeros.is_empty() {
                return Err(Error::Domain(format!("RMSPE undefined: zero targets at rows {zeros:?}")));
            }
            let sum: f64 = predictions
                .as_slice()
                .iter()
                .zip(targets)
                .map(|(p, y)| ((y - p) / y).powi(2))
                .sum();
            Ok((sum / n).sqrt())
        }
    }
}
