//! Dense layers and the forward/backward primitives.
//!
//! All arithmetic is f64; weights are stored row-major, one row per output
//! unit. Softmax layers participate in backpropagation through the fused
//! cross-entropy path (the caller supplies the gradient with respect to the
//! pre-activation), so `derivative_factor` is never asked for softmax.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

/// Shape and wiring of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// Probability of dropping each unit of this layer's output during
    /// training; 0 disables dropout.
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        assert!(input_dim >= 1 && output_dim >= 1, "layer dims must be >= 1");
        LayerSpec { input_dim, output_dim, activation, dropout_rate: 0.0 }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        self.dropout_rate = rate;
        self
    }
}

/// One dense layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub spec: LayerSpec,
    /// Row-major, `output_dim × input_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-layer activations cached for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub output: Vec<f64>,
}

/// Parameter gradients of one layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrad {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }
}

impl Dense {
    /// Fan-in-scaled uniform initialization (limit `sqrt(6 / fan_in)`),
    /// biases zero.
    pub fn init(spec: LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / spec.input_dim as f64).sqrt();
        let weights = (0..spec.input_dim * spec.output_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Dense {
            spec,
            weights,
            biases: vec![0.0; spec.output_dim],
        }
    }

    /// The initialization bound for this layer's weights.
    pub fn init_limit(&self) -> f64 {
        (6.0 / self.spec.input_dim as f64).sqrt()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &[f64]) -> LayerCache {
        debug_assert_eq!(x.len(), self.spec.input_dim);
        let mut z = self.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.spec.input_dim..(o + 1) * self.spec.input_dim];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *zo += acc;
        }
        let output = match self.spec.activation {
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Linear => z.clone(),
            Activation::Softmax => softmax(&z),
        };
        LayerCache { input: x.to_vec(), pre_activation: z, output }
    }

    /// Converts an output-side gradient into a pre-activation gradient.
    pub fn dz_from_da(&self, cache: &LayerCache, da: &[f64]) -> Vec<f64> {
        match self.spec.activation {
            Activation::Relu => cache
                .pre_activation
                .iter()
                .zip(da)
                .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::Linear => da.to_vec(),
            Activation::Softmax => {
                unreachable!("softmax backward goes through the fused cross-entropy path")
            }
        }
    }

    /// Accumulates parameter gradients from a pre-activation gradient and
    /// returns the gradient with respect to the layer input.
    pub fn backward_from_dz(&self, cache: &LayerCache, dz: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
        debug_assert_eq!(dz.len(), self.spec.output_dim);
        let input_dim = self.spec.input_dim;
        let mut dx = vec![0.0; input_dim];
        for (o, g) in dz.iter().enumerate() {
            grad.biases[o] += g;
            let row = &self.weights[o * input_dim..(o + 1) * input_dim];
            let grad_row = &mut grad.weights[o * input_dim..(o + 1) * input_dim];
            for i in 0..input_dim {
                grad_row[i] += g * cache.input[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// A sequence of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    pub layers: Vec<Dense>,
}

impl DenseStack {
    pub fn init(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Self {
        for pair in specs.windows(2) {
            assert_eq!(
                pair[0].output_dim, pair[1].input_dim,
                "layer shapes must chain"
            );
        }
        DenseStack {
            layers: specs.iter().map(|s| Dense::init(*s, rng)).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut current = x.to_vec();
        for layer in &self.layers {
            current = layer.forward(&current);
        }
        current
    }

    pub fn forward_cached(&self, x: &[f64]) -> Vec<LayerCache> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let cache = layer.forward_cached(&current);
            current = cache.output.clone();
            caches.push(cache);
        }
        caches
    }

    pub fn grads(&self) -> Vec<DenseGrad> {
        self.layers.iter().map(DenseGrad::zeros_like).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }

    /// Flat parameter count, weights plus biases.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn snapshot(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.layers.iter().map(|l| (l.weights.clone(), l.biases.clone())).collect()
    }

    pub fn restore(&mut self, snapshot: &[(Vec<f64>, Vec<f64>)]) {
        for (layer, (w, b)) in self.layers.iter_mut().zip(snapshot) {
            layer.weights.clone_from(w);
            layer.biases.clone_from(b);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// `log(sum(exp(z)))` computed stably.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    #[test]
    fn shapes_chain_and_init_is_bounded() {
        let mut rng = rng_from_seed(42);
        let stack = DenseStack::init(
            &[
                LayerSpec::new(5, 64, Activation::Relu),
                LayerSpec::new(64, 32, Activation::Relu),
            ],
            &mut rng,
        );
        for layer in &stack.layers {
            let limit = layer.init_limit();
            assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            assert!(layer.biases.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, 2.0, 3.0, -5.0, 0.0, 7.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));

        // Extreme logits stay normalized instead of overflowing.
        let p = softmax(&[700.0, -700.0, 0.0, 1.0, 2.0, 3.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_shift_invariant() {
        let z = [0.3, -1.2, 4.0, 0.0, 2.2, -0.7];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let a = softmax(&z);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_backward_masks_negative_pre_activations() {
        let mut rng = rng_from_seed(1);
        let layer = Dense::init(LayerSpec::new(3, 2, Activation::Relu), &mut rng);
        let cache = layer.forward_cached(&[0.5, -0.2, 1.0]);
        let dz = layer.dz_from_da(&cache, &[1.0, 1.0]);
        for (z, g) in cache.pre_activation.iter().zip(&dz) {
            if *z <= 0.0 {
                assert_eq!(*g, 0.0);
            } else {
                assert_eq!(*g, 1.0);
            }
        }
    }

    #[test]
    fn zero_weights_zero_input_give_zero_weight_grads() {
        let mut rng = rng_from_seed(1);
        let mut layer = Dense::init(LayerSpec::new(4, 3, Activation::Linear), &mut rng);
        layer.weights.iter_mut().for_each(|w| *w = 0.0);
        let cache = layer.forward_cached(&[0.0; 4]);
        let mut grad = DenseGrad::zeros_like(&layer);
        layer.backward_from_dz(&cache, &[1.0, -2.0, 0.5], &mut grad);
        assert!(grad.weights.iter().all(|g| *g == 0.0));
        // Bias gradients still flow.
        assert_eq!(grad.biases, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut rng = rng_from_seed(3);
        let mut stack = DenseStack::init(
            &[LayerSpec::new(4, 4, Activation::Relu), LayerSpec::new(4, 2, Activation::Linear)],
            &mut rng,
        );
        let snap = stack.snapshot();
        let before = stack.clone();
        for layer in &mut stack.layers {
            layer.weights.iter_mut().for_each(|w| *w += 1.0);
        }
        assert_ne!(stack, before);
        stack.restore(&snap);
        assert_eq!(stack, before);
    }
}
