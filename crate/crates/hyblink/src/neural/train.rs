//! Training: Adam over mini-batches, dropout on the head's hidden layer, and
//! early stopping on validation loss with best-weights restoration.
//!
//! The two stages are separate: the autoencoder minimizes reconstruction MSE
//! over encoder and decoder; the classifier then minimizes cross-entropy over
//! the head only, with the encoder frozen.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SemanticLabel;
use crate::seeding::{derive_seed, rng_from_seed};
use crate::synthgen::Dataset;

use super::layers::{log_sum_exp, DenseGrad, DenseStack, LayerCache};
use super::{argmax, Model, Standardizer, FEATURE_DIM};

/// Hyperparameters shared by both training stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub early_stop_patience: u32,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 256,
            early_stop_patience: 5,
            early_stop_min_delta: 1e-4,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::invalid("learning_rate must be in (0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.early_stop_min_delta >= 0.0) {
            return Err(Error::invalid("early_stop_min_delta must be >= 0"));
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid("adam betas must be in (0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        Ok(())
    }
}

/// One epoch of recorded history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Classifier stage only; blank for the autoencoder.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderOutcome {
    pub history: Vec<EpochStats>,
    /// Validation MSE of the untrained model, before the first update.
    pub initial_val_loss: f64,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutcome {
    pub history: Vec<EpochStats>,
    pub initial_val_loss: f64,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Accuracy of the restored model on the training split.
    pub train_accuracy: f64,
    /// Accuracy of the restored model on the validation split.
    pub val_accuracy: f64,
    /// Raised when training accuracy exceeds held-out accuracy by more than
    /// 0.05.
    pub overfit: bool,
}

/// Adam moments for one parameter tensor.
struct AdamTensor {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamTensor {
    fn new(len: usize) -> Self {
        AdamTensor { m: vec![0.0; len], v: vec![0.0; len] }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, t: u64) {
        let bias1 = 1.0 - cfg.adam_beta1.powi(t as i32);
        let bias2 = 1.0 - cfg.adam_beta2.powi(t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
            *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Adam state for a whole stack (one tensor pair per layer).
struct AdamStack {
    tensors: Vec<(AdamTensor, AdamTensor)>,
    step: u64,
}

impl AdamStack {
    fn new(stack: &DenseStack) -> Self {
        AdamStack {
            tensors: stack
                .layers
                .iter()
                .map(|l| (AdamTensor::new(l.weights.len()), AdamTensor::new(l.biases.len())))
                .collect(),
            step: 0,
        }
    }

    fn apply(&mut self, stack: &mut DenseStack, grads: &[DenseGrad], cfg: &TrainConfig) {
        self.step += 1;
        for (layer, ((mw, mb), grad)) in
            stack.layers.iter_mut().zip(self.tensors.iter_mut().zip(grads))
        {
            mw.update(&mut layer.weights, &grad.weights, cfg, self.step);
            mb.update(&mut layer.biases, &grad.biases, cfg, self.step);
        }
    }
}

fn zero_grads(grads: &mut [DenseGrad]) {
    for g in grads {
        g.weights.iter_mut().for_each(|v| *v = 0.0);
        g.biases.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Mean squared reconstruction error of the current model over standardized
/// rows.
pub(super) fn autoencoder_loss(model: &Model, xs: &[[f64; FEATURE_DIM]]) -> f64 {
    let mut total = 0.0;
    for x in xs {
        let code = model.encoder.forward(x);
        let recon = model.decoder.forward(&code);
        for (r, t) in recon.iter().zip(x) {
            let d = r - t;
            total += d * d;
        }
    }
    total / (xs.len() * FEATURE_DIM) as f64
}

/// Accumulates MSE gradients for one batch; returns the batch loss.
/// Gradients are averaged over `batch_len × FEATURE_DIM`, matching
/// [`autoencoder_loss`] restricted to the batch.
pub(super) fn autoencoder_batch_grads(
    model: &Model,
    xs: &[[f64; FEATURE_DIM]],
    enc_grads: &mut [DenseGrad],
    dec_grads: &mut [DenseGrad],
) -> f64 {
    let scale = 1.0 / (xs.len() * FEATURE_DIM) as f64;
    let mut loss = 0.0;
    for x in xs {
        let enc_caches = model.encoder.forward_cached(x);
        let code = enc_caches.last().expect("encoder has layers").output.clone();
        let dec_caches = model.decoder.forward_cached(&code);
        let recon = &dec_caches.last().expect("decoder has layers").output;

        // d(MSE)/d(recon) = 2·(recon − x)·scale; decoder output is linear.
        let mut da: Vec<f64> = recon
            .iter()
            .zip(x)
            .map(|(r, t)| {
                let d = r - t;
                loss += d * d * scale;
                2.0 * d * scale
            })
            .collect();
        da = backward_stack(&model.decoder, &dec_caches, da, dec_grads);
        backward_stack(&model.encoder, &enc_caches, da, enc_grads);
    }
    loss
}

/// Backpropagates an output-side gradient through a stack, accumulating
/// parameter gradients; returns the gradient at the stack input.
fn backward_stack(
    stack: &DenseStack,
    caches: &[LayerCache],
    mut da: Vec<f64>,
    grads: &mut [DenseGrad],
) -> Vec<f64> {
    for (i, layer) in stack.layers.iter().enumerate().rev() {
        let dz = layer.dz_from_da(&caches[i], &da);
        da = layer.backward_from_dz(&caches[i], &dz, &mut grads[i]);
    }
    da
}

/// Cross-entropy of the classifier over standardized rows (dropout off).
pub(super) fn classifier_loss(
    model: &Model,
    xs: &[[f64; FEATURE_DIM]],
    ys: &[SemanticLabel],
) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let code = model.encoder.forward(x);
        let hidden = model.head.layers[0].forward(&code);
        let logits_cache = model.head.layers[1].forward_cached(&hidden);
        let z = &logits_cache.pre_activation;
        total += log_sum_exp(z) - z[y.ordinal() as usize];
    }
    total / xs.len() as f64
}

/// Accumulates cross-entropy gradients for one batch (optionally through the
/// encoder as well); returns the batch loss. `dropout_mask` is `None` in
/// evaluation/verification mode.
#[allow(clippy::too_many_arguments)]
pub(super) fn classifier_batch_grads(
    model: &Model,
    xs: &[[f64; FEATURE_DIM]],
    ys: &[SemanticLabel],
    head_grads: &mut [DenseGrad],
    mut enc_grads: Option<&mut [DenseGrad]>,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> f64 {
    let scale = 1.0 / xs.len() as f64;
    let dropout = model.head.layers[0].spec.dropout_rate;
    let keep = 1.0 - dropout;
    let mut rng = dropout_rng;
    let mut loss = 0.0;

    for (x, y) in xs.iter().zip(ys) {
        let enc_caches = model.encoder.forward_cached(x);
        let code = enc_caches.last().expect("encoder has layers").output.clone();

        let hidden_cache = model.head.layers[0].forward_cached(&code);
        let mut hidden = hidden_cache.output.clone();
        let mask: Option<Vec<f64>> = match rng.as_deref_mut() {
            Some(r) if dropout > 0.0 => {
                let mask: Vec<f64> = hidden
                    .iter()
                    .map(|_| if r.gen::<f64>() < dropout { 0.0 } else { 1.0 / keep })
                    .collect();
                hidden.iter_mut().zip(&mask).for_each(|(h, m)| *h *= m);
                Some(mask)
            }
            _ => None,
        };

        let logits_cache = model.head.layers[1].forward_cached(&hidden);
        let z = &logits_cache.pre_activation;
        let target = y.ordinal() as usize;
        loss += (log_sum_exp(z) - z[target]) * scale;

        // Fused softmax + cross-entropy: dL/dz = (softmax(z) − onehot)·scale.
        let probs = super::layers::softmax(z);
        let dz: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| (p - if i == target { 1.0 } else { 0.0 }) * scale)
            .collect();

        let mut dh = model.head.layers[1].backward_from_dz(&logits_cache, &dz, &mut head_grads[1]);
        if let Some(mask) = &mask {
            dh.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        let dz0 = model.head.layers[0].dz_from_da(&hidden_cache, &dh);
        let dcode = model.head.layers[0].backward_from_dz(&hidden_cache, &dz0, &mut head_grads[0]);

        if let Some(enc) = enc_grads.as_deref_mut() {
            backward_stack(&model.encoder, &enc_caches, dcode, enc);
        }
    }
    loss
}

/// Early-stopping bookkeeping shared by both stages.
struct Stopper {
    best_val: f64,
    best_epoch: u32,
    since_best: u32,
    patience: u32,
    min_delta: f64,
}

impl Stopper {
    fn new(patience: u32, min_delta: f64) -> Self {
        Stopper {
            best_val: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            patience,
            min_delta,
        }
    }

    /// Records an epoch's validation loss; returns (is_new_best, should_stop).
    fn observe(&mut self, epoch: u32, val_loss: f64) -> (bool, bool) {
        if self.best_val - val_loss > self.min_delta {
            self.best_val = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }
}

fn standardized_rows(d: &Dataset, s: &Standardizer) -> Vec<[f64; FEATURE_DIM]> {
    d.features().map(|f| s.apply(f)).collect()
}

/// Trains encoder and decoder to minimize reconstruction MSE.
///
/// Fits the standardizer on the training split first (even for zero epochs),
/// restores the best-validation weights before returning, and marks the
/// autoencoder trained.
pub fn train_autoencoder(
    model: &mut Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<AutoencoderOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }

    let standardizer = Standardizer::fit(train.features())?;
    let train_x = standardized_rows(train, &standardizer);
    let val_x = standardized_rows(val, &standardizer);
    model.standardizer = Some(standardizer);

    let initial_val_loss = autoencoder_loss(model, &val_x);
    let mut opt_enc = AdamStack::new(&model.encoder);
    let mut opt_dec = AdamStack::new(&model.decoder);
    let mut enc_grads = model.encoder.grads();
    let mut dec_grads = model.decoder.grads();
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, "train/ae/shuffle"));

    let mut history = Vec::new();
    let mut stopper = Stopper::new(cfg.early_stop_patience, cfg.early_stop_min_delta);
    let mut best = (model.encoder.snapshot(), model.decoder.snapshot());
    let mut stopped_early = false;
    let mut indices: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<[f64; FEATURE_DIM]> = chunk.iter().map(|&i| train_x[i]).collect();
            zero_grads(&mut enc_grads);
            zero_grads(&mut dec_grads);
            let batch_loss =
                autoencoder_batch_grads(model, &batch, &mut enc_grads, &mut dec_grads);
            epoch_loss += batch_loss * batch.len() as f64;
            opt_enc.apply(&mut model.encoder, &enc_grads, cfg);
            opt_dec.apply(&mut model.decoder, &dec_grads, cfg);
        }
        if !model.encoder.all_finite() || !model.decoder.all_finite() {
            return Err(Error::invalid("non-finite parameter after update"));
        }

        let train_loss = epoch_loss / train_x.len() as f64;
        let val_loss = autoencoder_loss(model, &val_x);
        history.push(EpochStats { epoch, train_loss, val_loss, val_accuracy: None });

        let (is_best, stop) = stopper.observe(epoch, val_loss);
        if is_best {
            best = (model.encoder.snapshot(), model.decoder.snapshot());
        }
        if stop {
            stopped_early = true;
            break;
        }
    }

    if cfg.epochs > 0 && stopper.best_epoch > 0 {
        model.encoder.restore(&best.0);
        model.decoder.restore(&best.1);
    }
    model.ae_trained = true;

    let best_val_loss = if stopper.best_epoch > 0 { stopper.best_val } else { initial_val_loss };
    Ok(AutoencoderOutcome {
        history,
        initial_val_loss,
        best_epoch: stopper.best_epoch,
        best_val_loss,
        stopped_early,
    })
}

fn accuracy(model: &Model, xs: &[[f64; FEATURE_DIM]], ys: &[SemanticLabel]) -> f64 {
    let mut correct = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        let code = model.encoder.forward(x);
        let probs = model.head.forward(&code);
        if argmax(&probs) == y.ordinal() as usize {
            correct += 1;
        }
    }
    correct as f64 / xs.len() as f64
}

/// Trains the classifier head on the frozen encoder's codes.
pub fn train_classifier(
    model: &mut Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<ClassifierOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    if !model.ae_trained {
        return Err(Error::Untrained("train the autoencoder before the classifier"));
    }

    let standardizer = model.standardizer_ref()?.clone();
    let train_x = standardized_rows(train, &standardizer);
    let val_x = standardized_rows(val, &standardizer);
    let train_y: Vec<SemanticLabel> = train.labels().collect();
    let val_y: Vec<SemanticLabel> = val.labels().collect();

    let initial_val_loss = classifier_loss(model, &val_x, &val_y);
    let mut opt = AdamStack::new(&model.head);
    let mut head_grads = model.head.grads();
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, "train/head/shuffle"));
    let mut dropout_rng = rng_from_seed(derive_seed(cfg.seed, "train/head/dropout"));

    let mut history = Vec::new();
    let mut stopper = Stopper::new(cfg.early_stop_patience, cfg.early_stop_min_delta);
    let mut best = model.head.snapshot();
    let mut stopped_early = false;
    let mut indices: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let xs: Vec<[f64; FEATURE_DIM]> = chunk.iter().map(|&i| train_x[i]).collect();
            let ys: Vec<SemanticLabel> = chunk.iter().map(|&i| train_y[i]).collect();
            zero_grads(&mut head_grads);
            let batch_loss = classifier_batch_grads(
                model,
                &xs,
                &ys,
                &mut head_grads,
                None,
                Some(&mut dropout_rng),
            );
            epoch_loss += batch_loss * xs.len() as f64;
            opt.apply(&mut model.head, &head_grads, cfg);
        }
        if !model.head.all_finite() {
            return Err(Error::invalid("non-finite parameter after update"));
        }

        let train_loss = epoch_loss / train_x.len() as f64;
        let val_loss = classifier_loss(model, &val_x, &val_y);
        let val_acc = accuracy(model, &val_x, &val_y);
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: Some(val_acc),
        });

        let (is_best, stop) = stopper.observe(epoch, val_loss);
        if is_best {
            best = model.head.snapshot();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }

    if cfg.epochs > 0 && stopper.best_epoch > 0 {
        model.head.restore(&best);
    }
    model.head_trained = true;

    let train_accuracy = accuracy(model, &train_x, &train_y);
    let val_accuracy = accuracy(model, &val_x, &val_y);
    let best_val_loss = if stopper.best_epoch > 0 { stopper.best_val } else { initial_val_loss };
    Ok(ClassifierOutcome {
        history,
        initial_val_loss,
        best_epoch: stopper.best_epoch,
        best_val_loss,
        stopped_early,
        train_accuracy,
        val_accuracy,
        overfit: train_accuracy - val_accuracy > 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Thresholds;
    use crate::neural::init_model;
    use crate::synthgen::{generate_dataset, split, FeatureStatsTable};

    fn small_data() -> (Dataset, Dataset) {
        let d = generate_dataset(400, 11, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        split(&d, 0.8, 1).unwrap()
    }

    #[test]
    fn zero_epochs_leaves_weights_unchanged() {
        let (train, val) = small_data();
        let mut m = init_model(1);
        let before_enc = m.encoder.clone();
        let before_dec = m.decoder.clone();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(m.encoder, before_enc);
        assert_eq!(m.decoder, before_dec);
        assert!(m.ae_trained);
        assert!(m.standardizer.is_some());
    }

    #[test]
    fn autoencoder_training_reduces_validation_loss() {
        let (train, val) = small_data();
        let mut m = init_model(2);
        let cfg = TrainConfig { epochs: 15, seed: 2, ..TrainConfig::default() };
        let out = train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
        assert!(
            out.best_val_loss < out.initial_val_loss,
            "no improvement: {} vs {}",
            out.best_val_loss,
            out.initial_val_loss
        );
        // The restored model reproduces the recorded best validation loss.
        let s = m.standardizer.clone().unwrap();
        let val_x = standardized_rows(&val, &s);
        let loss = autoencoder_loss(&m, &val_x);
        assert!((loss - out.best_val_loss).abs() < 1e-12);
    }

    #[test]
    fn early_stopping_triggers_on_flat_validation_loss() {
        // A huge min_delta makes every epoch count as non-improving after the
        // first, so training must stop after exactly `patience` extra epochs.
        let (train, val) = small_data();
        let mut m = init_model(3);
        let cfg = TrainConfig {
            epochs: 50,
            early_stop_patience: 3,
            early_stop_min_delta: 1e9,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.history.len(), 1 + 3);
    }

    #[test]
    fn classifier_requires_trained_autoencoder() {
        let (train, val) = small_data();
        let mut m = init_model(4);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_classifier(&mut m, &train, &val, &cfg),
            Err(Error::Untrained(_))
        ));
    }

    #[test]
    fn classifier_freezes_encoder() {
        let (train, val) = small_data();
        let mut m = init_model(5);
        let cfg = TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() };
        train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
        let encoder_before = m.encoder.clone();
        train_classifier(&mut m, &train, &val, &cfg).unwrap();
        assert_eq!(m.encoder, encoder_before);
        assert!(m.is_trained());
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val) = small_data();
        let cfg = TrainConfig { epochs: 4, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut m = init_model(9);
            let ae = train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
            let cl = train_classifier(&mut m, &train, &val, &cfg).unwrap();
            (m, ae, cl)
        };
        let (m1, ae1, cl1) = run();
        let (m2, ae2, cl2) = run();
        assert_eq!(m1, m2);
        assert_eq!(ae1, ae2);
        assert_eq!(cl1, cl2);
    }

    #[test]
    fn probabilities_normalize_after_training() {
        let (train, val) = small_data();
        let mut m = init_model(6);
        let cfg = TrainConfig { epochs: 3, seed: 6, ..TrainConfig::default() };
        train_autoencoder(&mut m, &train, &val, &cfg).unwrap();
        train_classifier(&mut m, &train, &val, &cfg).unwrap();
        for (f, _) in val.rows.iter().take(50) {
            let (_, probs) = m.classify(f).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 1.5, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
