use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    first_moment: Option<Gradients>,
    second_moment: Option<Gradients>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::config("learning_rate", format!("must be finite and >= 0, got {lr}")));
        }
        Ok(OptimizerState {
            kind,
            lr,
            first_moment: None,
            second_moment: None,
            step: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Drop accumulated moments and the step counter.
    pub fn reset(&mut self) {
        self.first_moment = None;
        self.second_moment = None;
        self.step = 0;
    }

    pub fn first_moment(&self) -> Option<&Gradients> {
        self.first_moment.as_ref()
    }

    /// Apply one update. The parameters are untouched if the gradient is
    /// mis-shaped or contains a non-finite entry.
    pub fn step(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<()> {
        if !grads.matches(params) {
            return Err(Error::shape("optimizer gradients", "parameter layout", "different layout"));
        }
        if let Some(path) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient {path}")));
        }
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
                    sgd(p.weight.as_mut_slice(), g.weight.as_slice(), lr);
                    sgd(&mut p.bias, &g.bias, lr);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let m = self.first_moment.get_or_insert_with(|| Gradients::zeros_like(params));
                let v = self.second_moment.get_or_insert_with(|| Gradients::zeros_like(params));
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let adam = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                };
                for (((p, g), m), v) in params
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut m.layers)
                    .zip(&mut v.layers)
                {
                    adam(
                        p.weight.as_mut_slice(),
                        g.weight.as_slice(),
                        m.weight.as_mut_slice(),
                        v.weight.as_mut_slice(),
                    );
                    adam(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
                }
            }
        }
        Ok(())
    }
}

fn sgd(p: &mut [f64], g: &[f64], lr: f64) {
    for (p, g) in p.iter_mut().zip(g) {
        *p -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::nn::mlp::{HiddenActivation, Layer, OutputActivation};

    fn scalar(p: f64) -> MlpParams {
        MlpParams::new(
            vec![Layer {
                weight: DenseMatrix::from_rows(&[[p]]).unwrap(),
                bias: vec![0.0],
            }],
            HiddenActivation::Relu,
            OutputActivation::Identity,
        )
        .unwrap()
    }

    fn grad(g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(&scalar(0.0));
        grads.layers[0].weight.set(0, 0, g);
        grads
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1).unwrap();
        opt.step(&mut p, &grad(2.0)).unwrap();
        assert_eq!(p.layers()[0].weight.get(0, 0), 1.0 - 0.1 * 2.0);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_sgd_params() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1).unwrap();
        opt.step(&mut p, &grad(0.0)).unwrap();
        assert_eq!(p, scalar(1.0));
    }

    #[test]
    fn adam_zero_gradient_only_decays_moments() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.001).unwrap();
        opt.step(&mut p, &grad(1.0)).unwrap();
        let after_first = p.clone();
        let m_before = opt.first_moment().unwrap().layers[0].weight.get(0, 0);
        opt.step(&mut p, &grad(0.0)).unwrap();
        let m_after = opt.first_moment().unwrap().layers[0].weight.get(0, 0);
        assert!((m_after - 0.9 * m_before).abs() < 1e-15);
        // With momentum carried over the parameter still moves.
        assert!(p.layers()[0].weight.get(0, 0) < after_first.layers()[0].weight.get(0, 0));

        let mut fresh = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.001).unwrap();
        opt.step(&mut fresh, &grad(0.0)).unwrap();
        assert_eq!(fresh, scalar(1.0));
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        // m̂ = g, v̂ = g², step = lr·g/(|g| + eps)
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.001).unwrap();
        opt.step(&mut p, &grad(1.0)).unwrap();
        let expected = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.layers()[0].weight.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_path() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1).unwrap();
        let err = opt.step(&mut p, &grad(f64::INFINITY)).unwrap_err();
        assert!(err.to_string().contains("layer[0].weight[0,0]"), "{err}");
        assert_eq!(p, scalar(1.0));
        assert_eq!(opt.steps(), 0);
    }
}
