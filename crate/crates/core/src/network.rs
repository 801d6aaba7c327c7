//! Fully connected binary classifier: ReLU hidden layers, one sigmoid output.
//! The Bayesian variant keeps a posterior over every weight and bias; the
//! deterministic variant keeps point estimates with identical shapes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ndcore::{sigmoid_scalar, Matrix, Tape, Var};
use crate::rng::Rng;
use crate::variational::{sample_weights, MixturePrior, Noise, VariationalParams, WeightSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let spec = Self { input_dim, hidden };
        spec.validate()?;
        Ok(spec)
    }

    /// Two hidden layers of 128 units.
    pub fn standard(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: default_hidden(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("network input dimension must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, output layer last (width 1).
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// One activation per layer: ReLU on hidden layers, sigmoid on the output.
    pub fn activations(&self) -> Vec<Activation> {
        let mut acts = vec![Activation::Relu; self.hidden.len()];
        acts.push(Activation::Sigmoid);
        acts
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn check_weights(&self, layers: &[LayerWeights]) -> Result<()> {
        let shapes = self.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(invalid(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (l, &(i, o)) in layers.iter().zip(&shapes) {
            if l.weight.shape() != (i, o) || l.bias.shape() != (1, o) {
                return Err(Error::Shape {
                    op: "network weights",
                    left: (i, o),
                    right: l.weight.shape(),
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "network input",
                left: x.shape(),
                right: (x.rows(), self.input_dim),
            });
        }
        Ok(())
    }
}

/// Concrete weights (`in x out`) and bias (`1 x out`) of a dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Pre-sigmoid outputs, one per input row.
pub fn forward_logits(layers: &[LayerWeights], x: &Matrix) -> Result<Vec<f64>> {
    let mut h = x.clone();
    let last = layers.len().saturating_sub(1);
    for (k, layer) in layers.iter().enumerate() {
        let mut z = h.matmul(&layer.weight)?;
        let bias = layer.bias.as_slice();
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                *v += b;
                if k < last && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        h = z;
    }
    Ok(h.into_vec())
}

/// Records the network on a tape and returns the `n x 1` logit node.
pub fn record_logits(tape: &mut Tape, layers: &[(Var, Var)], x: Var) -> Result<Var> {
    let mut h = x;
    for (k, &(w, b)) in layers.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        h = if k + 1 < layers.len() { tape.relu(z)? } else { z };
    }
    Ok(h)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnnModel {
    pub spec: NetworkSpec,
    pub params: VariationalParams,
    pub prior: MixturePrior,
    #[serde(default)]
    pub meta: TrainingMeta,
}

impl BnnModel {
    /// Fresh posterior: μ ~ U(-0.2, 0.2), ρ ~ U(-5, -4).
    pub fn init(spec: NetworkSpec, prior: MixturePrior, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Init);
        let params = VariationalParams::init(&spec.layer_shapes(), &mut rng);
        Ok(Self {
            spec,
            params,
            prior,
            meta: TrainingMeta { seed, epochs: 0 },
        })
    }

    /// Rebuilds a model from stored parts, checking the parameter shapes.
    pub fn from_parts(spec: NetworkSpec, params: VariationalParams, prior: MixturePrior) -> Result<Self> {
        spec.validate()?;
        if params.shapes() != spec.layer_shapes() {
            return Err(invalid("variational parameters do not match the network spec"));
        }
        Ok(Self {
            spec,
            params,
            prior,
            meta: TrainingMeta::default(),
        })
    }

    pub fn draw_sample(&self, rng: &mut Rng) -> Result<WeightSample> {
        sample_weights(&self.params, Noise::draw(&self.params, rng))
    }

    pub fn forward_logits(&self, weights: &WeightSample, x: &Matrix) -> Result<Vec<f64>> {
        self.spec.check_input(x)?;
        self.spec.check_weights(&weights.layers)?;
        forward_logits(&weights.layers, x)
    }

    /// Output probabilities of one sampled network.
    pub fn forward(&self, weights: &WeightSample, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .forward_logits(weights, x)?
            .into_iter()
            .map(sigmoid_scalar)
            .collect())
    }

    /// The network at the posterior means.
    pub fn mean_network(&self) -> DeterministicModel {
        DeterministicModel {
            spec: self.spec.clone(),
            layers: self.params.means(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicModel {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerWeights>,
}

impl DeterministicModel {
    /// Weights and biases ~ U(-0.2, 0.2).
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Init);
        let params = VariationalParams::init(&spec.layer_shapes(), &mut rng);
        Ok(Self {
            spec,
            layers: params.means(),
        })
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<LayerWeights>) -> Result<Self> {
        spec.validate()?;
        spec.check_weights(&layers)?;
        Ok(Self { spec, layers })
    }

    pub fn forward_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.spec.check_input(x)?;
        forward_logits(&self.layers, x)
    }

    pub fn forward_det(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_logits(x)?.into_iter().map(sigmoid_scalar).collect())
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
