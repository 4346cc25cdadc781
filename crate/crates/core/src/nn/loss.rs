use serde::{Deserialize, Serialize};

use super::mlp::OutputActivation;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Probabilities are clamped to `[CE_CLAMP, 1 - CE_CLAMP]` before `ln`.
pub const CE_CLAMP: f64 = 1e-12;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean of squared errors over output units.
    Mse,
    /// Categorical cross-entropy; a single output column is treated as
    /// binary cross-entropy on `P(y = 1)`.
    CrossEntropy,
}

impl LossKind {
    pub fn per_sample(self, predictions: &DenseMatrix, targets: &DenseMatrix) -> Result<Vec<f64>> {
        check_shapes(predictions, targets)?;
        match self {
            LossKind::Mse => Ok(predictions
                .iter_rows()
                .zip(targets.iter_rows())
                .map(|(p, t)| {
                    p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
                })
                .collect()),
            LossKind::CrossEntropy => {
                validate_probability_rows("predictions", predictions)?;
                validate_probability_rows("targets", targets)?;
                Ok(predictions
                    .iter_rows()
                    .zip(targets.iter_rows())
                    .map(|(p, t)| cross_entropy_row(p, t))
                    .collect())
            }
        }
    }

    pub fn mean(self, predictions: &DenseMatrix, targets: &DenseMatrix) -> Result<f64> {
        let losses = self.per_sample(predictions, targets)?;
        Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
    }

    /// Per-sample gradient of the loss with respect to the output-layer
    /// pre-activation, for the canonical activation pairing.
    pub fn logit_gradient(
        self,
        activation: OutputActivation,
        predictions: &DenseMatrix,
        targets: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        check_shapes(predictions, targets)?;
        let k = predictions.cols() as f64;
        match (self, activation) {
            (LossKind::Mse, OutputActivation::Identity) => {
                let mut g = predictions.clone();
                for (g, t) in g.as_mut_slice().iter_mut().zip(targets.as_slice()) {
                    *g = 2.0 * (*g - t) / k;
                }
                Ok(g)
            }
            (LossKind::CrossEntropy, OutputActivation::Softmax)
            | (LossKind::CrossEntropy, OutputActivation::Sigmoid) => {
                let mut g = predictions.clone();
                for (g, t) in g.as_mut_slice().iter_mut().zip(targets.as_slice()) {
                    *g -= t;
                }
                Ok(g)
            }
            (loss, act) => Err(Error::Invalid(format!(
                "loss {loss:?} is not paired with output activation {act:?}"
            ))),
        }
    }
}

fn check_shapes(predictions: &DenseMatrix, targets: &DenseMatrix) -> Result<()> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape(
            "loss targets",
            format!("{:?}", predictions.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    Ok(())
}

fn cross_entropy_row(p: &[f64], t: &[f64]) -> f64 {
    let clamp = |v: f64| v.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
    if p.len() == 1 {
        let (p, t) = (clamp(p[0]), t[0]);
        return -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    -p.iter()
        .zip(t)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * clamp(p).ln())
        .sum::<f64>()
}

fn validate_probability_rows(what: &str, m: &DenseMatrix) -> Result<()> {
    for (r, row) in m.iter_rows().enumerate() {
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Invalid(format!("{what} row {r} has entries outside [0, 1]")));
        }
        if row.len() > 1 {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "{what} row {r} sums to {sum}, not a probability vector"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn exact_one_hot_prediction_is_near_zero() {
        let l = LossKind::CrossEntropy
            .per_sample(&m(&[&[0.0, 1.0, 0.0]]), &m(&[&[0.0, 1.0, 0.0]]))
            .unwrap();
        assert!(l[0] >= 0.0 && l[0] <= 2.0 * CE_CLAMP);
    }

    #[test]
    fn uniform_binary_prediction_is_ln2() {
        let l = LossKind::CrossEntropy
            .per_sample(&m(&[&[0.5, 0.5], &[0.5, 0.5]]), &m(&[&[1.0, 0.0], &[0.0, 1.0]]))
            .unwrap();
        for v in l {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        }
        let b = LossKind::CrossEntropy.per_sample(&m(&[&[0.5]]), &m(&[&[1.0]])).unwrap();
        assert!((b[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mse_uses_mean_over_outputs() {
        let l = LossKind::Mse.per_sample(&m(&[&[1.0, 2.0]]), &m(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(l, vec![2.5]);
    }

    #[test]
    fn rejects_unnormalised_rows() {
        let err = LossKind::CrossEntropy.per_sample(&m(&[&[0.7, 0.7]]), &m(&[&[1.0, 0.0]]));
        assert!(matches!(err, Err(Error::Invalid(_))));
        assert!(LossKind::Mse.per_sample(&m(&[&[1.0]]), &m(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn pairing_enforced() {
        let p = m(&[&[0.5, 0.5]]);
        assert!(LossKind::Mse.logit_gradient(OutputActivation::Softmax, &p, &p).is_err());
        let g = LossKind::CrossEntropy
            .logit_gradient(OutputActivation::Softmax, &p, &m(&[&[1.0, 0.0]]))
            .unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.5]);
    }
}
