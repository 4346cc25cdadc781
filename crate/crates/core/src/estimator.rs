//! Data value estimator: an MLP over `(features ‖ label)` with a sigmoid
//! output that gives each sample's selection probability, plus Bernoulli
//! selection sampling and the score function `∇ log π(s)`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitRole, TaskKind};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{ForwardPass, Gradients, MlpParams, OptimizerKind, OptimizerState, OutputActivation};
use crate::rng::seeded;

/// Default clamp applied to selection probabilities.
pub const SELECTION_EPSILON: f64 = 1e-6;

/// Binary inclusion mask over a valuation batch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionVector(Vec<bool>);

impl SelectionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        SelectionVector(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_selected(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// 0/1 weights, usable as sample weights for the predictor.
    pub fn as_weights(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Selection from the low `len` bits of `mask` (bit i ↦ sample i).
    pub fn from_mask(mask: u64, len: usize) -> Self {
        SelectionVector((0..len).map(|i| mask >> i & 1 == 1).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            hidden: vec![100, 100],
            optimizer: OptimizerKind::adam(),
            learning_rate: 0.01,
            epsilon: SELECTION_EPSILON,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValueEstimator {
    params: MlpParams,
    optimizer: OptimizerState,
    task: TaskKind,
    feature_dim: usize,
    label_dim: usize,
    epsilon: f64,
}

impl ValueEstimator {
    /// Glorot-initialised estimator for data with the given layout.
    pub fn new(
        spec: &EstimatorSpec,
        task: TaskKind,
        feature_dim: usize,
        label_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![feature_dim + label_dim];
        dims.extend_from_slice(&spec.hidden);
        dims.push(1);
        if dims.contains(&0) {
            return Err(Error::config("estimator.hidden", "layer widths must be >= 1"));
        }
        let params = MlpParams::glorot(&dims, OutputActivation::Sigmoid, &mut seeded(seed))?;
        Self::from_params(spec, task, feature_dim, label_dim, params)
    }

    pub fn from_params(
        spec: &EstimatorSpec,
        task: TaskKind,
        feature_dim: usize,
        label_dim: usize,
        params: MlpParams,
    ) -> Result<Self> {
        if !(spec.epsilon > 0.0 && spec.epsilon < 0.5) {
            return Err(Error::config("estimator.epsilon", "must lie in (0, 0.5)"));
        }
        let expected_label_dim = match task {
            TaskKind::Regression => 1,
            TaskKind::Classification => label_dim.max(2),
        };
        if label_dim != expected_label_dim {
            return Err(Error::shape("estimator label encoding", expected_label_dim, label_dim));
        }
        if params.input_dim() != feature_dim + label_dim {
            return Err(Error::shape(
                "estimator input (features + label)",
                feature_dim + label_dim,
                params.input_dim(),
            ));
        }
        if params.output_dim() != 1 || params.output_activation() != OutputActivation::Sigmoid {
            return Err(Error::Invalid("estimator needs a single sigmoid output".into()));
        }
        Ok(ValueEstimator {
            params,
            optimizer: OptimizerState::new(spec.optimizer, spec.learning_rate)?,
            task,
            feature_dim,
            label_dim,
            epsilon: spec.epsilon,
        })
    }

    /// Estimator shaped for `data`.
    pub fn for_dataset(spec: &EstimatorSpec, data: &Dataset, seed: u64) -> Result<Self> {
        Self::new(spec, data.task(), data.feature_dim(), data.label_dim(), seed)
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// `[features | label]` rows fed to the network.
    pub fn encode(&self, batch: &Dataset) -> Result<DenseMatrix> {
        if batch.role() == SplitRole::Validation {
            return Err(Error::Invalid(
                "the value estimator only scores training-side samples, not validation rows".into(),
            ));
        }
        if batch.task() != self.task {
            return Err(Error::Invalid(format!(
                "estimator built for {:?}, got {:?} data",
                self.task,
                batch.task()
            )));
        }
        if batch.feature_dim() != self.feature_dim {
            return Err(Error::shape("estimator features", self.feature_dim, batch.feature_dim()));
        }
        if batch.label_dim() != self.label_dim {
            return Err(Error::shape("estimator labels", self.label_dim, batch.label_dim()));
        }
        batch.features().hconcat(batch.labels())
    }

    fn forward(&self, batch: &Dataset) -> Result<ForwardPass> {
        if batch.is_empty() {
            return Err(Error::Invalid("cannot value an empty batch".into()));
        }
        self.params.forward_cached(&self.encode(batch)?)
    }

    /// Selection probabilities `w_i ∈ [ε, 1−ε]`.
    pub fn estimate_values(&self, batch: &Dataset) -> Result<Vec<f64>> {
        let pass = self.forward(batch)?;
        Ok(pass.output.as_slice().iter().map(|&w| self.clamp(w)).collect())
    }

    fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    /// `∇_φ log π_φ(batch, s)`.
    ///
    /// The per-sample gradient at the sigmoid pre-activation is `s_i − w_i`
    /// (`d/dz log σ(z) = 1 − σ(z)`, `d/dz log(1 − σ(z)) = −σ(z)`); it is zero
    /// where the clamp is active.
    pub fn log_prob_gradient(&self, batch: &Dataset, selection: &SelectionVector) -> Result<Gradients> {
        let (pass, grad) = self.log_prob_logit_gradient(batch, selection)?;
        self.params.backward_logits(&pass, &grad)
    }

    /// Pre-activation gradient of `log π` (one entry per sample) together
    /// with the forward pass it came from.
    pub fn log_prob_logit_gradient(
        &self,
        batch: &Dataset,
        selection: &SelectionVector,
    ) -> Result<(ForwardPass, DenseMatrix)> {
        if selection.len() != batch.len() {
            return Err(Error::shape("selection vector", batch.len(), selection.len()));
        }
        let pass = self.forward(batch)?;
        let grad: Vec<f64> = pass
            .output
            .as_slice()
            .iter()
            .zip(selection.bits())
            .map(|(&w, &s)| {
                if w < self.epsilon || w > 1.0 - self.epsilon {
                    0.0
                } else if s {
                    1.0 - w
                } else {
                    -w
                }
            })
            .collect();
        let grad = DenseMatrix::column(&grad)?;
        Ok((pass, grad))
    }

    /// One optimizer step along `grads`.
    pub fn apply_gradient(&mut self, grads: &Gradients) -> Result<()> {
        self.optimizer.step(&mut self.params, grads)
    }
}

/// Independent `s_i ~ Bernoulli(w_i)`.
pub fn sample_selection(values: &[f64], seed: u64) -> Result<SelectionVector> {
    if let Some(i) = values.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Invalid(format!("probability {i} = {} outside [0, 1]", values[i])));
    }
    let mut rng = seeded(seed);
    Ok(SelectionVector(
        values.iter().map(|&w| rng.random::<f64>() < w).collect(),
    ))
}

/// `Σ_i s_i ln w_i + (1 − s_i) ln(1 − w_i)` with `w` clamped to
/// `[SELECTION_EPSILON, 1 − SELECTION_EPSILON]`.
pub fn selection_log_prob(values: &[f64], selection: &SelectionVector) -> Result<f64> {
    if values.len() != selection.len() {
        return Err(Error::shape("selection vector", values.len(), selection.len()));
    }
    Ok(values
        .iter()
        .zip(selection.bits())
        .map(|(&w, &s)| {
            let w = w.clamp(SELECTION_EPSILON, 1.0 - SELECTION_EPSILON);
            if s {
                w.ln()
            } else {
                (1.0 - w).ln()
            }
        })
        .sum())
}
