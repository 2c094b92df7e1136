//! Minimal dense network with hand-derived backpropagation and Adam.
//! No autodiff: every gradient here is checked against finite differences
//! in the test suite.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected input of {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One dense layer; weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    fn forward(&self, input: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        pre.clear();
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = self.biases[o]
                + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            pre.push(z);
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-layer gradient accumulator matching an [`Mlp`]'s shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.biases {
                *b *= factor;
            }
        }
    }
}

/// Intermediate values of one forward pass, needed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `inputs[0]` is the network input.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Build with scaled-uniform init (bound 1/sqrt(fan_in)); when
    /// `zero_final` is set the last layer starts at zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_activation: Activation,
        zero_final: bool,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (in_dim, out_dim) = (pair[0], pair[1]);
                let last = i == sizes.len() - 2;
                let bound = 1.0 / (in_dim as f64).sqrt();
                let mut sample = |zero: bool| {
                    if zero {
                        0.0
                    } else {
                        rng.gen_range(-bound..bound)
                    }
                };
                let zero = last && zero_final;
                Dense {
                    weights: (0..in_dim * out_dim).map(|_| sample(zero)).collect(),
                    biases: (0..out_dim).map(|_| sample(zero)).collect(),
                    in_dim,
                    out_dim,
                    activation: if last { Activation::Linear } else { hidden_activation },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::new();
            let mut out = Vec::new();
            layer.forward(&current, &mut pre, &mut out);
            inputs.push(current);
            pre_activations.push(pre);
            current = out;
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
            output: current,
        })
    }

    /// Backpropagate `output_grad` through the cached pass, accumulating
    /// parameter gradients into `grads` and returning the input gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut MlpGrad,
    ) -> Vec<f64> {
        let mut delta = output_grad.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre_activations[l];
            let input = &cache.inputs[l];
            for (d, z) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(*z);
            }
            let g = &mut grads.layers[l];
            for o in 0..layer.out_dim {
                let d = delta[o];
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            delta = prev;
        }
        delta
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pull `d(loss)/d(softmax output)` back to the pre-softmax logits:
/// dz_i = p_i * (dp_i - sum_j dp_j p_j).
pub fn softmax_backward(probs: &[f64], output_grad: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(output_grad).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(output_grad)
        .map(|(p, g)| p * (g - dot))
        .collect()
}

/// target <- tau * online + (1 - tau) * target, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tw, ow) in t.weights.iter_mut().zip(&o.weights) {
            *tw = tau * ow + (1.0 - tau) * *tw;
        }
        for (tb, ob) in t.biases.iter_mut().zip(&o.biases) {
            *tb = tau * ob + (1.0 - tau) * *tb;
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second-moment state for one parameter slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamSlice {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    /// Weight and bias moments per layer, in (weights, biases) pairs.
    pub slices: Vec<(AdamSlice, AdamSlice)>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            slices: mlp
                .layers
                .iter()
                .map(|l| {
                    (
                        AdamSlice {
                            m: vec![0.0; l.weights.len()],
                            v: vec![0.0; l.weights.len()],
                        },
                        AdamSlice {
                            m: vec![0.0; l.biases.len()],
                            v: vec![0.0; l.biases.len()],
                        },
                    )
                })
                .collect(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam on one parameter slice; `t` is the 1-based step.
pub fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamSlice,
    t: u64,
    lr: f64,
) -> Result<(), NnError> {
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient);
    }
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// One Adam step over every parameter of `mlp`.
pub fn adam_step(mlp: &mut Mlp, grads: &MlpGrad, state: &mut AdamState, lr: f64) -> Result<(), NnError> {
    state.step += 1;
    let t = state.step;
    for (layer, (grad, (mw, mb))) in mlp
        .layers
        .iter_mut()
        .zip(grads.layers.iter().zip(state.slices.iter_mut()))
    {
        adam_update_slice(&mut layer.weights, &grad.weights, mw, t, lr)?;
        adam_update_slice(&mut layer.biases, &grad.biases, mb, t, lr)?;
    }
    Ok(())
}
