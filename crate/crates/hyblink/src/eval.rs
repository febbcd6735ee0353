//! Classifier evaluation: confusion matrix, accuracy, per-class precision
//! and recall, plus the feature-offset experiment that reproduces the effect
//! of channel degradation on semantic labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, SemanticLabel};
use crate::neural::{Model, QuantizedModel};
use crate::synthgen::Dataset;

/// 6×6 count matrix; rows are truth, columns are prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; SemanticLabel::COUNT]; SemanticLabel::COUNT],
}

/// Tallies aligned prediction/truth sequences.
pub fn confusion(preds: &[SemanticLabel], truth: &[SemanticLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction and truth lengths differ: {} vs {}",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("cannot evaluate empty sequences"));
    }
    let mut counts = [[0usize; SemanticLabel::COUNT]; SemanticLabel::COUNT];
    for (p, t) in preds.iter().zip(truth) {
        counts[t.ordinal() as usize][p.ordinal() as usize] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..SemanticLabel::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

/// Precision/recall of one class; `None` marks an undefined metric (empty
/// denominator) rather than coercing it to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: SemanticLabel,
    pub support: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub total: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Standard metric definitions over a confusion matrix.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let per_class = SemanticLabel::ALL
        .iter()
        .map(|&label| {
            let k = label.ordinal() as usize;
            let tp = cm.counts[k][k];
            let truth_total: usize = cm.counts[k].iter().sum();
            let pred_total: usize = (0..SemanticLabel::COUNT).map(|r| cm.counts[r][k]).sum();
            ClassMetrics {
                label,
                support: truth_total,
                precision: (pred_total > 0).then(|| tp as f64 / pred_total as f64),
                recall: (truth_total > 0).then(|| tp as f64 / truth_total as f64),
            }
        })
        .collect();
    Metrics {
        total: cm.total(),
        accuracy: cm.accuracy(),
        per_class,
    }
}

/// Full evaluation report, JSON-serializable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))
    }
}

/// Evaluates an arbitrary classifier against a dataset's stored labels.
pub fn evaluate_with<F>(classify: F, dataset: &Dataset) -> Result<EvalReport>
where
    F: Fn(&FeatureVector) -> Result<SemanticLabel>,
{
    let mut preds = Vec::with_capacity(dataset.len());
    let mut truth = Vec::with_capacity(dataset.len());
    for (f, label) in &dataset.rows {
        preds.push(classify(f)?);
        truth.push(*label);
    }
    let cm = confusion(&preds, &truth)?;
    let m = metrics(&cm);
    Ok(EvalReport {
        total: m.total,
        accuracy: m.accuracy,
        matrix: cm,
        per_class: m.per_class,
    })
}

/// Evaluates the trained float model.
pub fn evaluate_model(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    evaluate_with(|f| model.classify(f).map(|(l, _)| l), dataset)
}

/// Evaluates the quantized model.
pub fn evaluate_quantized(qm: &QuantizedModel, dataset: &Dataset) -> Result<EvalReport> {
    evaluate_with(|f| Ok(qm.classify(f).0), dataset)
}

/// Feature offsets emulating channel degradation (values are subtracted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOffsets {
    pub snr_db: f64,
    pub power_mw: f64,
}

impl Default for FeatureOffsets {
    fn default() -> Self {
        FeatureOffsets { snr_db: 10.0, power_mw: 0.05 }
    }
}

impl FeatureOffsets {
    pub fn apply(&self, f: &FeatureVector) -> FeatureVector {
        FeatureVector {
            snr_db: f.snr_db - self.snr_db,
            input_power_mw: f.input_power_mw - self.power_mw,
            ..*f
        }
    }
}

/// Label-flip statistics of the offset experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipStats {
    pub offsets: FeatureOffsets,
    pub total: usize,
    pub flipped: usize,
    pub flip_fraction: f64,
    /// Flips keyed by the unshifted label's ordinal.
    pub per_class_flipped: [usize; SemanticLabel::COUNT],
    pub per_class_total: [usize; SemanticLabel::COUNT],
}

impl FlipStats {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))
    }
}

/// Classifies every row before and after subtracting the offsets and reports
/// how many labels changed. The classifier is pluggable so the experiment
/// runs against either the trained model or the rule engine.
pub fn jamming_feature_experiment<F>(
    dataset: &Dataset,
    classify: F,
    offsets: FeatureOffsets,
) -> Result<FlipStats>
where
    F: Fn(&FeatureVector) -> Result<SemanticLabel>,
{
    if dataset.is_empty() {
        return Err(Error::invalid("experiment dataset is empty"));
    }
    let mut flipped = 0usize;
    let mut per_class_flipped = [0usize; SemanticLabel::COUNT];
    let mut per_class_total = [0usize; SemanticLabel::COUNT];
    for (f, _) in &dataset.rows {
        let base = classify(f)?;
        let shifted = classify(&offsets.apply(f))?;
        per_class_total[base.ordinal() as usize] += 1;
        if base != shifted {
            flipped += 1;
            per_class_flipped[base.ordinal() as usize] += 1;
        }
    }
    Ok(FlipStats {
        offsets,
        total: dataset.len(),
        flipped,
        flip_fraction: flipped as f64 / dataset.len() as f64,
        per_class_flipped,
        per_class_total,
    })
}
