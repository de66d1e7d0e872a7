//! Dense layers with a sparse first-layer input. Hidden layers use ReLU, the
//! single output unit a sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::text::SparseVector;

/// Fully connected layer. `weights` is input-major: the weight from input
/// `i` to output `o` lives at `i * outputs + o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        DenseLayer { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.outputs + output]
    }

    fn forward_sparse(&self, x: &SparseVector, out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for &(i, v) in x.entries() {
            let row = &self.weights[i as usize * self.outputs..(i as usize + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }

    fn forward_dense(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
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

/// Binary cross-entropy on a logit, stable for large |z|.
pub fn bce_with_logit(z: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Pre-activations of every layer for one example.
pub(crate) struct ForwardTrace {
    pub pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logit(&self) -> f64 {
        self.pre.last().expect("at least one layer")[0]
    }
}

pub(crate) fn forward(layers: &[DenseLayer], x: &SparseVector) -> ForwardTrace {
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut first = vec![0.0; layers[0].outputs];
    layers[0].forward_sparse(x, &mut first);
    pre.push(first);
    for layer in &layers[1..] {
        let act: Vec<f64> = pre.last().unwrap().iter().map(|&z| z.max(0.0)).collect();
        let mut z = vec![0.0; layer.outputs];
        layer.forward_dense(&act, &mut z);
        pre.push(z);
    }
    ForwardTrace { pre }
}

pub(crate) fn logit(layers: &[DenseLayer], x: &SparseVector) -> f64 {
    forward(layers, x).logit()
}

/// Gradient buffers shaped like the layers.
pub(crate) struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn like(layers: &[DenseLayer]) -> Self {
        Gradients {
            layers: layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Adds `scale * d loss / d params` for one example and returns its
/// unweighted loss.
pub(crate) fn accumulate(
    layers: &[DenseLayer],
    x: &SparseVector,
    label: bool,
    scale: f64,
    grads: &mut Gradients,
) -> f64 {
    let trace = forward(layers, x);
    let z = trace.logit();
    let y = if label { 1.0 } else { 0.0 };
    let loss = bce_with_logit(z, label);

    let mut delta = vec![scale * (sigmoid(z) - y)];
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let g = &mut grads.layers[k];
        for (gb, d) in g.bias.iter_mut().zip(&delta) {
            *gb += d;
        }
        if k == 0 {
            for &(i, v) in x.entries() {
                let row = &mut g.weights[i as usize * layer.outputs..(i as usize + 1) * layer.outputs];
                for (gw, d) in row.iter_mut().zip(&delta) {
                    *gw += v * d;
                }
            }
            break;
        }
        let below = &trace.pre[k - 1];
        let mut next = vec![0.0; layer.inputs];
        for (i, &zb) in below.iter().enumerate() {
            let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
            let grow = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
            let act = zb.max(0.0);
            let mut back = 0.0;
            for o in 0..layer.outputs {
                grow[o] += act * delta[o];
                back += row[o] * delta[o];
            }
            next[i] = if zb > 0.0 { back } else { 0.0 };
        }
        delta = next;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(!sigmoid(-800.0).is_nan());
    }

    #[test]
    fn bce_matches_naive() {
        for z in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let p: f64 = sigmoid(z);
            assert!((bce_with_logit(z, true) + p.ln()).abs() < 1e-12);
            assert!((bce_with_logit(z, false) + (1.0 - p).ln()).abs() < 1e-12);
        }
        assert!(bce_with_logit(1000.0, false).is_finite());
    }
}
