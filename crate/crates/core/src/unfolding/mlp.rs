//! Fully connected q-network: tanh hidden layers, sigmoid output.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::Backend;
use crate::channel_model::NetworkInstance;
use crate::{Error, Result};

/// Hidden widths as multiples of the input width `K(K+1)`; for `K = 10`
/// this is 154, 132, 110, 88, 66, 44.
const HIDDEN_FACTORS: [f64; 6] = [1.4, 1.2, 1.0, 0.8, 0.6, 0.4];

pub const HIDDEN_ACTIVATION: &str = "tanh";
pub const OUTPUT_ACTIVATION: &str = "sigmoid";

pub fn input_dim(k: usize) -> usize {
    k * (k + 1)
}

pub fn default_hidden_widths(k: usize) -> Vec<usize> {
    let base = input_dim(k) as f64;
    HIDDEN_FACTORS
        .iter()
        .map(|f| ((base * f).round() as usize).max(1))
        .collect()
}

/// `[K(K+1), hidden..., K]`.
pub fn layer_dims(k: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim(k));
    dims.extend_from_slice(hidden);
    dims.push(k);
    dims
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    pub layer_dims: Vec<usize>,
    /// Row-major `out × in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParameters {
    pub fn zeros(layer_dims: Vec<usize>) -> Self {
        let weights = layer_dims.windows(2).map(|d| vec![0.0; d[0] * d[1]]).collect();
        let biases = layer_dims.windows(2).map(|d| vec![0.0; d[1]]).collect();
        Self {
            layer_dims,
            weights,
            biases,
        }
    }

    /// Uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(layer_dims: Vec<usize>, rng: &mut R) -> Self {
        let mut params = Self::zeros(layer_dims);
        for (l, w) in params.weights.iter_mut().enumerate() {
            let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least one layer")
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "bad layer dims {:?}",
                self.layer_dims
            )));
        }
        let layers = self.layer_dims.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::InvalidConfig(format!(
                "{} layer dims need {layers} weight and bias blocks",
                self.layer_dims.len()
            )));
        }
        for (l, d) in self.layer_dims.windows(2).enumerate() {
            if self.weights[l].len() != d[0] * d[1] {
                return Err(Error::DimensionMismatch {
                    expected: d[0] * d[1],
                    got: self.weights[l].len(),
                });
            }
            if self.biases[l].len() != d[1] {
                return Err(Error::DimensionMismatch {
                    expected: d[1],
                    got: self.biases[l].len(),
                });
            }
        }
        Ok(())
    }

    /// Layer by layer: weights then biases.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Inverse of [`MlpParameters::flatten_into`]; returns the unread tail.
    pub fn unflatten_from<'a>(&mut self, mut flat: &'a [f64]) -> &'a [f64] {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (head, rest) = flat.split_at(w.len());
            w.copy_from_slice(head);
            let (head, rest) = rest.split_at(b.len());
            b.copy_from_slice(head);
            flat = rest;
        }
        flat
    }
}

/// Parameters lifted onto a backend.
pub struct MlpVars<V> {
    pub dims: Vec<usize>,
    pub weights: Vec<V>,
    pub biases: Vec<V>,
}

impl<V: Clone> MlpVars<V> {
    pub fn lift<B: Backend<V = V>>(b: &mut B, params: &MlpParameters) -> Self {
        Self {
            dims: params.layer_dims.clone(),
            weights: params.weights.iter().map(|w| b.constant(w.clone())).collect(),
            biases: params.biases.iter().map(|x| b.constant(x.clone())).collect(),
        }
    }

    pub fn apply<B: Backend<V = V>>(&self, b: &mut B, input: &V) -> V {
        let last = self.weights.len() - 1;
        let mut h = input.clone();
        for l in 0..=last {
            let z = b.matvec(&self.weights[l], self.dims[l + 1], self.dims[l], &h);
            let z = b.add(&z, &self.biases[l]);
            h = if l == last { b.sigmoid(&z) } else { b.tanh(&z) };
        }
        h
    }
}

pub fn mlp_forward(params: &MlpParameters, input: &DVector<f64>) -> Result<DVector<f64>> {
    params.validate()?;
    if input.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: input.len(),
        });
    }
    let mut eager = super::tape::Eager;
    let vars = MlpVars::lift(&mut eager, params);
    let out = vars.apply(&mut eager, &input.as_slice().to_vec());
    Ok(DVector::from_vec(out))
}

/// `ln(1 + G_ij) / ln(1 + G_max)` for every entry, row-major.
pub fn gain_features(inst: &NetworkInstance, g_max: f64) -> Vec<f64> {
    let k = inst.k();
    let scale = g_max.ln_1p();
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            out.push(inst.gains[(i, j)].ln_1p() / scale);
        }
    }
    out
}

/// `[p; gain features]`, length `K(K+1)`.
pub fn mlp_input_encode(inst: &NetworkInstance, p: &DVector<f64>, g_max: f64) -> Result<DVector<f64>> {
    if p.len() != inst.k() {
        return Err(Error::DimensionMismatch {
            expected: inst.k(),
            got: p.len(),
        });
    }
    let mut v = p.as_slice().to_vec();
    v.extend(gain_features(inst, g_max));
    Ok(DVector::from_vec(v))
}
