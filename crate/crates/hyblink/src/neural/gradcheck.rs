//! Finite-difference verification of the analytic gradients.
//!
//! Central differences with step 1e-5 on randomly sampled parameters, for
//! both the reconstruction loss (encoder + decoder) and the classification
//! loss (encoder + head). Dropout is disabled throughout, so the compared
//! graph is deterministic.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureVector, SemanticLabel};
use crate::seeding::rng_from_seed;

use super::layers::DenseGrad;
use super::train::{autoencoder_batch_grads, autoencoder_loss, classifier_batch_grads, classifier_loss};
use super::{Model, FEATURE_DIM};

const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub ae_max_rel_error: f64,
    pub classifier_max_rel_error: f64,
    pub ae_params_checked: usize,
    pub classifier_params_checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StackSel {
    Encoder,
    Decoder,
    Head,
}

#[derive(Debug, Clone, Copy)]
struct ParamLoc {
    stack: StackSel,
    layer: usize,
    bias: bool,
    index: usize,
}

fn param_mut(model: &mut Model, loc: ParamLoc) -> &mut f64 {
    let stack = match loc.stack {
        StackSel::Encoder => &mut model.encoder,
        StackSel::Decoder => &mut model.decoder,
        StackSel::Head => &mut model.head,
    };
    let layer = &mut stack.layers[loc.layer];
    if loc.bias {
        &mut layer.biases[loc.index]
    } else {
        &mut layer.weights[loc.index]
    }
}

fn domain(model: &Model, stacks: &[StackSel]) -> Vec<ParamLoc> {
    let mut out = Vec::new();
    for &sel in stacks {
        let stack = match sel {
            StackSel::Encoder => &model.encoder,
            StackSel::Decoder => &model.decoder,
            StackSel::Head => &model.head,
        };
        for (layer_idx, layer) in stack.layers.iter().enumerate() {
            for index in 0..layer.weights.len() {
                out.push(ParamLoc { stack: sel, layer: layer_idx, bias: false, index });
            }
            for index in 0..layer.biases.len() {
                out.push(ParamLoc { stack: sel, layer: layer_idx, bias: true, index });
            }
        }
    }
    out
}

fn analytic_at(grads: &[(StackSel, &[DenseGrad])], loc: ParamLoc) -> f64 {
    for (sel, stack_grads) in grads {
        if *sel == loc.stack {
            let g = &stack_grads[loc.layer];
            return if loc.bias { g.biases[loc.index] } else { g.weights[loc.index] };
        }
    }
    unreachable!("sampled location outside the loss domain")
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Verifies analytic gradients of both losses against central differences on
/// at least `params_per_loss` sampled parameters each.
pub fn grad_check(
    model: &Model,
    features: &[FeatureVector],
    labels: &[SemanticLabel],
    params_per_loss: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::invalid(
            "grad check needs equal, non-empty feature and label slices",
        ));
    }
    if params_per_loss == 0 {
        return Err(Error::invalid("params_per_loss must be at least 1"));
    }

    let xs: Vec<[f64; FEATURE_DIM]> = features.iter().map(|f| model.prepare_input(f)).collect();
    let mut rng = rng_from_seed(seed);
    let mut work = model.clone();

    // Reconstruction loss over encoder + decoder.
    let mut enc_grads = model.encoder.grads();
    let mut dec_grads = model.decoder.grads();
    autoencoder_batch_grads(model, &xs, &mut enc_grads, &mut dec_grads);
    let ae_domain = domain(model, &[StackSel::Encoder, StackSel::Decoder]);
    let mut ae_max = 0.0f64;
    for _ in 0..params_per_loss {
        let loc = ae_domain[rng.gen_range(0..ae_domain.len())];
        let original = *param_mut(&mut work, loc);
        *param_mut(&mut work, loc) = original + STEP;
        let plus = autoencoder_loss(&work, &xs);
        *param_mut(&mut work, loc) = original - STEP;
        let minus = autoencoder_loss(&work, &xs);
        *param_mut(&mut work, loc) = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = analytic_at(
            &[(StackSel::Encoder, &enc_grads), (StackSel::Decoder, &dec_grads)],
            loc,
        );
        ae_max = ae_max.max(relative_error(analytic, numeric));
    }

    // Classification loss over encoder + head (encoder gradients are
    // computed even though training freezes them).
    let mut enc_grads_ce = model.encoder.grads();
    let mut head_grads = model.head.grads();
    classifier_batch_grads(model, &xs, labels, &mut head_grads, Some(&mut enc_grads_ce), None);
    let ce_domain = domain(model, &[StackSel::Encoder, StackSel::Head]);
    let mut ce_max = 0.0f64;
    for _ in 0..params_per_loss {
        let loc = ce_domain[rng.gen_range(0..ce_domain.len())];
        let original = *param_mut(&mut work, loc);
        *param_mut(&mut work, loc) = original + STEP;
        let plus = classifier_loss(&work, &xs, labels);
        *param_mut(&mut work, loc) = original - STEP;
        let minus = classifier_loss(&work, &xs, labels);
        *param_mut(&mut work, loc) = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = analytic_at(
            &[(StackSel::Encoder, &enc_grads_ce), (StackSel::Head, &head_grads)],
            loc,
        );
        ce_max = ce_max.max(relative_error(analytic, numeric));
    }

    Ok(GradCheckReport {
        ae_max_rel_error: ae_max,
        classifier_max_rel_error: ce_max,
        ae_params_checked: params_per_loss,
        classifier_params_checked: params_per_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Thresholds;
    use crate::neural::init_model;
    use crate::synthgen::{generate_dataset, FeatureStatsTable};

    fn sample_batch(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<SemanticLabel>) {
        let d = generate_dataset(n, seed, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        let features = d.features().copied().collect();
        let labels = d.labels().collect();
        (features, labels)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = init_model(31);
        let (features, labels) = sample_batch(24, 31);
        let report = grad_check(&model, &features, &labels, 150, 31).unwrap();
        assert!(
            report.ae_max_rel_error < 1e-4,
            "ae rel error {}",
            report.ae_max_rel_error
        );
        assert!(
            report.classifier_max_rel_error < 1e-4,
            "classifier rel error {}",
            report.classifier_max_rel_error
        );
        assert!(report.ae_params_checked >= 100);
        assert!(report.classifier_params_checked >= 100);
    }

    #[test]
    fn check_is_deterministic() {
        let model = init_model(32);
        let (features, labels) = sample_batch(16, 32);
        let a = grad_check(&model, &features, &labels, 120, 5).unwrap();
        let b = grad_check(&model, &features, &labels, 120, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let model = init_model(33);
        let (features, labels) = sample_batch(4, 33);
        assert!(grad_check(&model, &[], &[], 10, 1).is_err());
        assert!(grad_check(&model, &features, &labels[..2], 10, 1).is_err());
        assert!(grad_check(&model, &features, &labels, 0, 1).is_err());
    }
}
