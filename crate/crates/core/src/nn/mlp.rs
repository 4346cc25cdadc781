use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

/// Sigmoid outputs are kept strictly inside (0, 1) by this margin.
pub const SIGMOID_MARGIN: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
    Identity,
}

/// One affine layer. `weight` is `(in_dim × out_dim)` so that `z = x·W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            weight: DenseMatrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn len(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    hidden: HiddenActivation,
    output: OutputActivation,
}

/// Activations recorded during a forward pass, consumed by backprop.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Input to each layer; `layer_inputs[0]` is the network input.
    pub layer_inputs: Vec<DenseMatrix>,
    /// Pre-activation of the output layer.
    pub logits: DenseMatrix,
    pub output: DenseMatrix,
}

/// Gradient set with the same layout as [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(
        layers: Vec<Layer>,
        hidden: HiddenActivation,
        output: OutputActivation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(
                    format!("layer[{k}].bias"),
                    layer.out_dim(),
                    layer.bias.len(),
                ));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::shape(
                        format!("layer[{}] input", k + 1),
                        layer.out_dim(),
                        next.in_dim(),
                    ));
                }
            }
        }
        Ok(MlpParams {
            layers,
            hidden,
            output,
        })
    }

    /// All-zero network with layer widths `dims = [in, h1, ..., out]`.
    pub fn zeros(dims: &[usize], output: OutputActivation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Invalid("dims needs input and output width".into()));
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::new(layers, HiddenActivation::Relu, output)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], output: OutputActivation, rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(dims, output)?;
        for layer in &mut params.layers {
            let (fan_in, fan_out) = (layer.in_dim(), layer.out_dim());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    /// Parameters flattened as `[W0, b0, W1, b1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("set_flat", self.num_params(), flat.len()));
        }
        unflatten(&mut self.layers, flat);
        Ok(())
    }

    pub fn forward(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(inputs)?.output)
    }

    pub fn forward_cached(&self, inputs: &DenseMatrix) -> Result<ForwardPass> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape(
                "layer[0] input",
                self.input_dim(),
                inputs.cols(),
            ));
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut current = inputs.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.matmul(&layer.weight)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(current);
            if k == last {
                let output = apply_output(self.output, &z);
                if !output.is_finite() {
                    return Err(Error::NonFinite(format!("layer[{k}] output")));
                }
                return Ok(ForwardPass {
                    layer_inputs,
                    logits: z,
                    output,
                });
            }
            current = match self.hidden {
                HiddenActivation::Relu => z.map(|v| v.max(0.0)),
            };
        }
        unreachable!("network has at least one layer")
    }

    /// Backprop from a gradient with respect to the network *output*
    /// activations (shape `rows × output_dim`).
    pub fn backward(&self, inputs: &DenseMatrix, upstream: &DenseMatrix) -> Result<Gradients> {
        let pass = self.forward_cached(inputs)?;
        if upstream.shape() != pass.output.shape() {
            return Err(Error::shape(
                "upstream gradient",
                format!("{:?}", pass.output.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let grad_logits = output_vjp(self.output, &pass.output, upstream);
        self.backward_logits(&pass, &grad_logits)
    }

    /// Backprop from a gradient with respect to the output-layer
    /// pre-activation.
    pub fn backward_logits(&self, pass: &ForwardPass, grad_logits: &DenseMatrix) -> Result<Gradients> {
        if grad_logits.shape() != pass.logits.shape() {
            return Err(Error::shape(
                "logit gradient",
                format!("{:?}", pass.logits.shape()),
                format!("{:?}", grad_logits.shape()),
            ));
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_logits.clone();
        for k in (0..self.layers.len()).rev() {
            let input = &pass.layer_inputs[k];
            let weight = input.t_matmul(&delta)?;
            let mut bias = vec![0.0; delta.cols()];
            for row in delta.iter_rows() {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads.push(Layer { weight, bias });
            if k > 0 {
                let mut back = delta.matmul_t(&self.layers[k].weight)?;
                // ReLU derivative: the stored layer input is the activation.
                for (g, &a) in back.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = back;
            }
        }
        grads.reverse();
        let grads = Gradients { layers: grads };
        if let Some(path) = grads.first_non_finite() {
            return Err(Error::NonFinite(path));
        }
        Ok(grads)
    }
}

fn apply_output(kind: OutputActivation, z: &DenseMatrix) -> DenseMatrix {
    match kind {
        OutputActivation::Identity => z.clone(),
        OutputActivation::Sigmoid => z.map(|v| sigmoid(v).clamp(SIGMOID_MARGIN, 1.0 - SIGMOID_MARGIN)),
        OutputActivation::Softmax => {
            let mut out = z.clone();
            for r in 0..out.rows() {
                softmax_in_place(out.row_mut(r));
            }
            out
        }
    }
}

/// Vector-Jacobian product of the output activation.
fn output_vjp(kind: OutputActivation, output: &DenseMatrix, upstream: &DenseMatrix) -> DenseMatrix {
    match kind {
        OutputActivation::Identity => upstream.clone(),
        OutputActivation::Sigmoid => {
            let mut g = upstream.clone();
            for (g, &p) in g.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *g *= p * (1.0 - p);
            }
            g
        }
        OutputActivation::Softmax => {
            let mut g = upstream.clone();
            for r in 0..g.rows() {
                let p = output.row(r);
                let dot: f64 = g.row(r).iter().zip(p).map(|(a, b)| a * b).sum();
                for (gi, &pi) in g.row_mut(r).iter_mut().zip(p) {
                    *gi = pi * (*gi - dot);
                }
            }
            g
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weight.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

fn unflatten(layers: &mut [Layer], flat: &[f64]) {
    let mut pos = 0;
    for l in layers {
        let w = l.weight.as_mut_slice();
        w.copy_from_slice(&flat[pos..pos + w.len()]);
        pos += w.len();
        let nb = l.bias.len();
        l.bias.copy_from_slice(&flat[pos..pos + nb]);
        pos += nb;
    }
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.to_flat().iter().all(|&v| v == 0.0)
    }

    pub(crate) fn matches(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.shape() == p.weight.shape() && g.bias.len() == p.bias.len())
    }

    /// Path of the first non-finite entry, e.g. `layer[1].weight[3,0]`.
    pub fn first_non_finite(&self) -> Option<String> {
        for (k, l) in self.layers.iter().enumerate() {
            let cols = l.weight.cols();
            if let Some(i) = l.weight.as_slice().iter().position(|v| !v.is_finite()) {
                return Some(format!("layer[{k}].weight[{},{}]", i / cols, i % cols));
            }
            if let Some(i) = l.bias.iter().position(|v| !v.is_finite()) {
                return Some(format!("layer[{k}].bias[{i}]"));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn single(weight: &[&[f64]], bias: &[f64], out: OutputActivation) -> MlpParams {
        MlpParams::new(
            vec![Layer {
                weight: DenseMatrix::from_rows(weight).unwrap(),
                bias: bias.to_vec(),
            }],
            HiddenActivation::Relu,
            out,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], OutputActivation::Identity);
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_sigmoid_net_outputs_half() {
        let net = MlpParams::zeros(&[3, 2], OutputActivation::Sigmoid).unwrap();
        let x = DenseMatrix::from_rows(&[[4.0, -1.0, 9.0], [0.0, 0.0, 0.0]]).unwrap();
        assert!(net.forward(&x).unwrap().as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn two_layer_matches_hand_evaluation() {
        let net = MlpParams::new(
            vec![
                Layer {
                    weight: DenseMatrix::from_rows(&[[0.5, -1.0], [0.25, 2.0]]).unwrap(),
                    bias: vec![0.1, -0.2],
                },
                Layer {
                    weight: DenseMatrix::from_rows(&[[1.5], [-0.5]]).unwrap(),
                    bias: vec![0.3],
                },
            ],
            HiddenActivation::Relu,
            OutputActivation::Identity,
        )
        .unwrap();
        let x = DenseMatrix::from_rows(&[[2.0, 1.0], [-1.0, 3.0]]).unwrap();
        // row 0: h = relu(1.0+0.25+0.1, -2+2-0.2) = (1.35, 0); y = 2.025 + 0.3
        // row 1: h = relu(-0.5+0.75+0.1, 1+6-0.2) = (0.35, 6.8); y = 0.525 - 3.4 + 0.3
        let y = net.forward(&x).unwrap();
        assert!((y.get(0, 0) - 2.325).abs() < 1e-12);
        assert!((y.get(1, 0) - (-2.575)).abs() < 1e-12);
    }

    #[test]
    fn shape_error_names_layer() {
        let net = MlpParams::zeros(&[3, 4, 2], OutputActivation::Softmax).unwrap();
        let x = DenseMatrix::zeros(1, 2);
        let err = net.forward(&x).unwrap_err().to_string();
        assert!(err.contains("layer[0]"), "{err}");
        let bad = MlpParams::new(
            vec![Layer::zeros(2, 3), Layer::zeros(4, 1)],
            HiddenActivation::Relu,
            OutputActivation::Identity,
        );
        assert!(bad.unwrap_err().to_string().contains("layer[1]"));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = seeded(3);
        let net = MlpParams::glorot(&[4, 8, 5], OutputActivation::Softmax, &mut rng).unwrap();
        let x = DenseMatrix::from_vec(6, 4, (0..24).map(|i| (i as f64 * 0.37).sin() * 5.0).collect()).unwrap();
        for row in net.forward(&x).unwrap().iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saturated_sigmoid_stays_inside_unit_interval() {
        let net = single(&[&[1000.0]], &[0.0], OutputActivation::Sigmoid);
        let x = DenseMatrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(9);
        let net = MlpParams::glorot(&[3, 5, 2], OutputActivation::Softmax, &mut rng).unwrap();
        let x = DenseMatrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]).unwrap();
        let g = net.backward(&x, &DenseMatrix::zeros(2, 2)).unwrap();
        assert!(g.is_zero());
        assert!(net.backward(&x, &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn scalar_mse_gradient_closed_form() {
        let net = single(&[&[0.7]], &[0.0], OutputActivation::Identity);
        let (x, y) = (1.5, 2.0);
        let input = DenseMatrix::from_rows(&[[x]]).unwrap();
        let y_hat = net.forward(&input).unwrap().get(0, 0);
        let upstream = DenseMatrix::from_rows(&[[2.0 * (y_hat - y)]]).unwrap();
        let g = net.backward(&input, &upstream).unwrap();
        assert!((g.layers[0].weight.get(0, 0) - 2.0 * (y_hat - y) * x).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = seeded(1);
        let mut net = MlpParams::glorot(&[2, 3, 1], OutputActivation::Sigmoid, &mut rng).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat.len(), net.num_params());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        net.set_flat(&doubled).unwrap();
        assert_eq!(net.to_flat(), doubled);
    }
}
