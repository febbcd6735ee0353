//! Post-training int8 quantization.
//!
//! Per-tensor symmetric affine scheme: `scale = max|w| / 127`, zero point 0,
//! values rounded and clamped to [-127, 127]. Inference dequantizes the
//! weights and runs the usual real-valued forward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, SemanticLabel};

use super::layers::{Activation, Dense, DenseStack, LayerSpec};
use super::{argmax, Model, Standardizer, CLASS_COUNT};

pub const QMAX: i8 = 127;

/// One quantized tensor with its affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub zero_point: i32,
    pub data: Vec<i8>,
}

impl QuantizedTensor {
    /// Quantizes a real tensor; an all-zero tensor gets scale 1.
    pub fn from_f64(values: &[f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = if max_abs > 0.0 { max_abs / f64::from(QMAX) } else { 1.0 };
        let data = values
            .iter()
            .map(|v| {
                let q = (v / scale).round();
                q.clamp(f64::from(-QMAX), f64::from(QMAX)) as i8
            })
            .collect();
        QuantizedTensor { rows, cols, scale, zero_point: 0, data }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|q| (f64::from(*q) - f64::from(self.zero_point)) * self.scale)
            .collect()
    }
}

/// A dense layer with quantized parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDense {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub weights: QuantizedTensor,
    pub biases: QuantizedTensor,
}

impl QuantizedDense {
    fn from_dense(layer: &Dense) -> Self {
        QuantizedDense {
            input_dim: layer.spec.input_dim,
            output_dim: layer.spec.output_dim,
            activation: layer.spec.activation,
            weights: QuantizedTensor::from_f64(
                &layer.weights,
                layer.spec.output_dim,
                layer.spec.input_dim,
            ),
            biases: QuantizedTensor::from_f64(&layer.biases, 1, layer.spec.output_dim),
        }
    }

    /// Real-valued layer reconstructed from the quantized parameters.
    pub fn dequantized(&self) -> Dense {
        Dense {
            spec: LayerSpec::new(self.input_dim, self.output_dim, self.activation),
            weights: self.weights.dequantize(),
            biases: self.biases.dequantize(),
        }
    }
}

/// Same topology as [`Model`], int8 parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub standardizer: Standardizer,
    pub encoder: Vec<QuantizedDense>,
    pub decoder: Vec<QuantizedDense>,
    pub head: Vec<QuantizedDense>,
}

impl QuantizedModel {
    fn stack(layers: &[QuantizedDense]) -> DenseStack {
        DenseStack { layers: layers.iter().map(QuantizedDense::dequantized).collect() }
    }

    /// Dequantized encoder+head forward pass.
    pub fn classify(&self, f: &FeatureVector) -> (SemanticLabel, [f64; CLASS_COUNT]) {
        let x = self.standardizer.apply(f);
        let code = Self::stack(&self.encoder).forward(&x);
        let probs = Self::stack(&self.head).forward(&code);
        let mut out = [0.0; CLASS_COUNT];
        out.copy_from_slice(&probs);
        let arg = argmax(&out);
        (SemanticLabel::from_ordinal(arg as u8).expect("head emits 6 classes"), out)
    }
}

/// Quantizes a trained model.
pub fn quantize(model: &Model) -> Result<QuantizedModel> {
    if !model.is_trained() {
        return Err(Error::Untrained("quantization requires a trained model"));
    }
    let convert = |stack: &DenseStack| stack.layers.iter().map(QuantizedDense::from_dense).collect();
    Ok(QuantizedModel {
        standardizer: model.standardizer_ref()?.clone(),
        encoder: convert(&model.encoder),
        decoder: convert(&model.decoder),
        head: convert(&model.head),
    })
}

/// Classification through the quantized pipeline.
pub fn classify_quantized(
    qm: &QuantizedModel,
    f: &FeatureVector,
) -> (SemanticLabel, [f64; CLASS_COUNT]) {
    qm.classify(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_model;
    use proptest::prelude::*;

    #[test]
    fn untrained_model_rejected() {
        let m = init_model(1);
        assert!(matches!(quantize(&m), Err(Error::Untrained(_))));
    }

    #[test]
    fn dequantization_error_bounded_by_half_scale() {
        let m = init_model(2);
        for stack in [&m.encoder, &m.decoder, &m.head] {
            for layer in &stack.layers {
                let q = QuantizedTensor::from_f64(
                    &layer.weights,
                    layer.spec.output_dim,
                    layer.spec.input_dim,
                );
                let deq = q.dequantize();
                for (w, d) in layer.weights.iter().zip(&deq) {
                    assert!(
                        (w - d).abs() <= q.scale / 2.0 + 1e-15,
                        "|{w} - {d}| > {}/2",
                        q.scale
                    );
                }
            }
        }
    }

    #[test]
    fn zero_tensor_quantizes_cleanly() {
        let q = QuantizedTensor::from_f64(&[0.0; 12], 3, 4);
        assert_eq!(q.scale, 1.0);
        assert!(q.data.iter().all(|v| *v == 0));
        assert!(q.dequantize().iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn round_trip_bound_holds_for_random_tensors(
            values in proptest::collection::vec(-100.0f64..100.0, 1..64),
        ) {
            let q = QuantizedTensor::from_f64(&values, 1, values.len());
            let deq = q.dequantize();
            for (w, d) in values.iter().zip(&deq) {
                prop_assert!((w - d).abs() <= q.scale / 2.0 + 1e-12);
            }
        }
    }
}
