//! Dense neural engine: a 64-32-64 autoencoder over the five features with a
//! small softmax classifier head on the 32-dimensional bottleneck code.
//!
//! Training (Adam, mini-batches, early stopping) lives in [`train`],
//! post-training int8 quantization in [`quant`], the binary container format
//! in [`io`], and the finite-difference gradient verification in
//! [`gradcheck`].

mod gradcheck;
mod io;
mod layers;
mod quant;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use io::{
    load_any_model, load_model, load_quantized_model, predictions, save_model,
    save_quantized_model, write_history_csv, write_latent_csv, LoadedModel,
};
pub use layers::{softmax, Activation, Dense, DenseGrad, DenseStack, LayerCache, LayerSpec};
pub use quant::{classify_quantized, quantize, QuantizedDense, QuantizedModel, QuantizedTensor};
pub use train::{
    train_autoencoder, train_classifier, AutoencoderOutcome, ClassifierOutcome, EpochStats,
    TrainConfig,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, SemanticLabel};
use crate::seeding::rng_from_seed;

pub const FEATURE_DIM: usize = 5;
pub const CODE_DIM: usize = 32;
pub const CLASS_COUNT: usize = 6;
pub const HEAD_HIDDEN_DIM: usize = 16;
pub const HEAD_DROPOUT: f64 = 0.2;

/// Z-score transform fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl Standardizer {
    /// Fits per-feature mean and population deviation; a zero deviation is
    /// replaced by 1 so constant features pass through centred.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a FeatureVector> + Clone) -> Result<Self> {
        let n = rows.clone().count();
        if n == 0 {
            return Err(Error::invalid("cannot fit a standardizer on no rows"));
        }
        let mut mean = [0.0; FEATURE_DIM];
        for f in rows.clone() {
            for (m, v) in mean.iter_mut().zip(f.as_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; FEATURE_DIM];
        for f in rows {
            for (k, v) in f.as_array().iter().enumerate() {
                let d = v - mean[k];
                var[k] += d * d;
            }
        }
        let mut std = [0.0; FEATURE_DIM];
        for (s, v) in std.iter_mut().zip(var) {
            let dev = (v / n as f64).sqrt();
            *s = if dev > 0.0 { dev } else { 1.0 };
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; FEATURE_DIM] {
        let mut out = f.as_array();
        for (k, v) in out.iter_mut().enumerate() {
            *v = (*v - self.mean[k]) / self.std[k];
        }
        out
    }
}

/// Autoencoder plus classifier head with a shared input standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub standardizer: Option<Standardizer>,
    /// 5 → 64 → 32, ReLU.
    pub encoder: DenseStack,
    /// 32 → 64 → 5, ReLU hidden, linear output.
    pub decoder: DenseStack,
    /// 32 → 16 (ReLU, dropout in training) → 6 (softmax).
    pub head: DenseStack,
    pub head_dropout: f64,
    pub ae_trained: bool,
    pub head_trained: bool,
}

pub fn encoder_specs() -> [LayerSpec; 2] {
    [
        LayerSpec::new(FEATURE_DIM, 64, Activation::Relu),
        LayerSpec::new(64, CODE_DIM, Activation::Relu),
    ]
}

pub fn decoder_specs() -> [LayerSpec; 2] {
    [
        LayerSpec::new(CODE_DIM, 64, Activation::Relu),
        LayerSpec::new(64, FEATURE_DIM, Activation::Linear),
    ]
}

pub fn head_specs() -> [LayerSpec; 2] {
    [
        LayerSpec::new(CODE_DIM, HEAD_HIDDEN_DIM, Activation::Relu).with_dropout(HEAD_DROPOUT),
        LayerSpec::new(HEAD_HIDDEN_DIM, CLASS_COUNT, Activation::Softmax),
    ]
}

/// Builds an untrained model with fan-in-scaled uniform weights,
/// deterministic per seed.
pub fn init_model(seed: u64) -> Model {
    let mut rng: ChaCha8Rng = rng_from_seed(seed);
    Model {
        standardizer: None,
        encoder: DenseStack::init(&encoder_specs(), &mut rng),
        decoder: DenseStack::init(&decoder_specs(), &mut rng),
        head: DenseStack::init(&head_specs(), &mut rng),
        head_dropout: HEAD_DROPOUT,
        ae_trained: false,
        head_trained: false,
    }
}

impl Model {
    pub fn is_trained(&self) -> bool {
        self.ae_trained && self.head_trained && self.standardizer.is_some()
    }

    pub(crate) fn standardizer_ref(&self) -> Result<&Standardizer> {
        self.standardizer
            .as_ref()
            .ok_or(Error::Untrained("no standardizer fitted"))
    }

    /// Standardized input for either a fitted or raw model (used by the
    /// gradient check, which may run pre-training).
    pub(crate) fn prepare_input(&self, f: &FeatureVector) -> [f64; FEATURE_DIM] {
        match &self.standardizer {
            Some(s) => s.apply(f),
            None => f.as_array(),
        }
    }

    /// Bottleneck code of one observation. Requires a trained autoencoder.
    pub fn encode(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        if !self.ae_trained {
            return Err(Error::Untrained("autoencoder has not been trained"));
        }
        let x = self.standardizer_ref()?.apply(f);
        Ok(self.encoder.forward(&x))
    }

    /// Reconstruction of one observation in standardized space.
    pub fn reconstruct(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        let code = self.encode(f)?;
        Ok(self.decoder.forward(&code))
    }

    /// Classifies one observation; deterministic (dropout disabled).
    pub fn classify(&self, f: &FeatureVector) -> Result<(SemanticLabel, [f64; CLASS_COUNT])> {
        if !self.is_trained() {
            return Err(Error::Untrained("classifier pipeline has not been trained"));
        }
        let x = self.standardizer_ref()?.apply(f);
        Ok(self.classify_standardized(&x))
    }

    /// Inference on an already-standardized input; no trained-state check.
    pub(crate) fn classify_standardized(&self, x: &[f64]) -> (SemanticLabel, [f64; CLASS_COUNT]) {
        let code = self.encoder.forward(x);
        let probs = self.head.forward(&code);
        let mut out = [0.0; CLASS_COUNT];
        out.copy_from_slice(&probs);
        let arg = argmax(&out);
        (SemanticLabel::from_ordinal(arg as u8).expect("head emits 6 classes"), out)
    }

    pub fn all_parameters_finite(&self) -> bool {
        self.encoder.all_finite() && self.decoder.all_finite() && self.head.all_finite()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Thresholds;
    use crate::synthgen::{generate_dataset, FeatureStatsTable};

    #[test]
    fn init_is_deterministic() {
        let a = init_model(42);
        let b = init_model(42);
        assert_eq!(a, b);
        let c = init_model(43);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_fan_in_limits() {
        let m = init_model(7);
        for stack in [&m.encoder, &m.decoder, &m.head] {
            for layer in &stack.layers {
                let limit = layer.init_limit();
                assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            }
        }
    }

    #[test]
    fn untrained_head_forward_is_a_distribution() {
        let m = init_model(1);
        let probs = m.head.forward(&[0.0; CODE_DIM]);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|p| p.is_finite() && *p > 0.0));
    }

    #[test]
    fn untrained_use_is_flagged() {
        let m = init_model(1);
        let f = FeatureVector::from_array([23.6, 0.07, 0.0, 60.0, 36.0]);
        assert!(matches!(m.encode(&f), Err(Error::Untrained(_))));
        assert!(matches!(m.classify(&f), Err(Error::Untrained(_))));
    }

    #[test]
    fn standardizer_normalizes_training_rows() {
        let d = generate_dataset(500, 9, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        let s = Standardizer::fit(d.features()).unwrap();
        let n = d.len() as f64;
        let mut mean = [0.0f64; FEATURE_DIM];
        let mut var = [0.0f64; FEATURE_DIM];
        for f in d.features() {
            let z = s.apply(f);
            for k in 0..FEATURE_DIM {
                mean[k] += z[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for f in d.features() {
            let z = s.apply(f);
            for k in 0..FEATURE_DIM {
                let dv = z[k] - mean[k];
                var[k] += dv * dv;
            }
        }
        for k in 0..FEATURE_DIM {
            let std = (var[k] / n).sqrt();
            assert!(mean[k].abs() < 1e-9, "feature {k} mean {}", mean[k]);
            assert!((std - 1.0).abs() < 1e-6, "feature {k} std {std}");
        }
    }

    #[test]
    fn identical_inputs_identical_codes() {
        let mut m = init_model(3);
        m.standardizer = Some(Standardizer {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        });
        m.ae_trained = true;
        let f = FeatureVector::from_array([20.0, 0.05, 0.1, 70.0, 36.5]);
        assert_eq!(m.encode(&f).unwrap(), m.encode(&f).unwrap());
    }
}
