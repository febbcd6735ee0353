//! Feature domain types, threshold binarization, and the semantic rule engine.
//!
//! An observation is five continuous values (two channel measurements, three
//! physiological signals). Binarization reduces each to a flag against a
//! configured threshold; the rule engine maps the 32 possible flag
//! combinations onto six communication classes, evaluating rules top-down
//! with first match winning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: the five continuous features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Radio signal-to-noise ratio, dB.
    pub snr_db: f64,
    /// Optical received power, mW.
    pub input_power_mw: f64,
    /// Body acceleration, m/s².
    pub acceleration_ms2: f64,
    /// Heart rate, beats per minute.
    pub heart_rate_bpm: f64,
    /// Body temperature, °C.
    pub body_temp_c: f64,
}

impl FeatureVector {
    /// Returns the features as an array in canonical column order.
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.snr_db,
            self.input_power_mw,
            self.acceleration_ms2,
            self.heart_rate_bpm,
            self.body_temp_c,
        ]
    }

    /// Builds a vector from canonical column order.
    pub fn from_array(v: [f64; 5]) -> Self {
        FeatureVector {
            snr_db: v[0],
            input_power_mw: v[1],
            acceleration_ms2: v[2],
            heart_rate_bpm: v[3],
            body_temp_c: v[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }
}

/// Decision thresholds for binarization.
///
/// Boundary convention: SNR, power and |acceleration| flip at the threshold
/// (>=); temperature flips strictly above it; heart rate is abnormal strictly
/// below the low bound or strictly above the high bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub snr_db: f64,
    pub power_mw: f64,
    pub accel_ms2: f64,
    pub hr_low_bpm: f64,
    pub hr_high_bpm: f64,
    pub temp_c: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            snr_db: 19.0,
            power_mw: 0.05,
            accel_ms2: 0.1,
            hr_low_bpm: 60.0,
            hr_high_bpm: 110.0,
            temp_c: 37.0,
        }
    }
}

impl Thresholds {
    /// Checks finiteness and the heart-rate band ordering.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.snr_db,
            self.power_mw,
            self.accel_ms2,
            self.hr_low_bpm,
            self.hr_high_bpm,
            self.temp_c,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        if self.hr_low_bpm >= self.hr_high_bpm {
            return Err(Error::invalid(format!(
                "hr_low_bpm ({}) must be below hr_high_bpm ({})",
                self.hr_low_bpm, self.hr_high_bpm
            )));
        }
        Ok(())
    }
}

/// The five threshold flags of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryFeatures {
    pub high_snr: bool,
    pub high_lpw: bool,
    pub high_acc: bool,
    pub abn_hr: bool,
    pub high_tmp: bool,
}

impl BinaryFeatures {
    pub const COMBINATIONS: usize = 32;

    pub fn new(high_snr: bool, high_lpw: bool, high_acc: bool, abn_hr: bool, high_tmp: bool) -> Self {
        BinaryFeatures {
            high_snr,
            high_lpw,
            high_acc,
            abn_hr,
            high_tmp,
        }
    }

    /// Packs the flags into 0..32 (`high_snr` is the most significant bit).
    pub fn to_index(self) -> u8 {
        (self.high_snr as u8) << 4
            | (self.high_lpw as u8) << 3
            | (self.high_acc as u8) << 2
            | (self.abn_hr as u8) << 1
            | self.high_tmp as u8
    }

    /// Inverse of [`to_index`](Self::to_index). Panics if `index >= 32`.
    pub fn from_index(index: u8) -> Self {
        assert!(index < 32, "binary feature index out of range: {index}");
        BinaryFeatures {
            high_snr: index & 0b10000 != 0,
            high_lpw: index & 0b01000 != 0,
            high_acc: index & 0b00100 != 0,
            abn_hr: index & 0b00010 != 0,
            high_tmp: index & 0b00001 != 0,
        }
    }
}

/// The six communication classes, in rule-table row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticLabel {
    Full,
    Wide,
    Motion,
    Critical,
    Unstable,
    Reduced,
}

impl SemanticLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [SemanticLabel; 6] = [
        SemanticLabel::Full,
        SemanticLabel::Wide,
        SemanticLabel::Motion,
        SemanticLabel::Critical,
        SemanticLabel::Unstable,
        SemanticLabel::Reduced,
    ];

    /// Fixed ordinal, 0..6 in rule-table row order.
    pub fn ordinal(self) -> u8 {
        match self {
            SemanticLabel::Full => 0,
            SemanticLabel::Wide => 1,
            SemanticLabel::Motion => 2,
            SemanticLabel::Critical => 3,
            SemanticLabel::Unstable => 4,
            SemanticLabel::Reduced => 5,
        }
    }

    pub fn from_ordinal(ord: u8) -> Result<Self> {
        Self::ALL
            .get(ord as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("semantic label ordinal out of range: {ord}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticLabel::Full => "Full",
            SemanticLabel::Wide => "Wide",
            SemanticLabel::Motion => "Motion",
            SemanticLabel::Critical => "Critical",
            SemanticLabel::Unstable => "Unstable",
            SemanticLabel::Reduced => "Reduced",
        }
    }
}

impl std::fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Reduces an observation to threshold flags.
///
/// Rejects non-finite input; thresholds are assumed validated.
pub fn binarize(f: &FeatureVector, t: &Thresholds) -> Result<BinaryFeatures> {
    if !f.is_finite() {
        return Err(Error::invalid("feature vector contains non-finite values"));
    }
    Ok(BinaryFeatures {
        high_snr: f.snr_db >= t.snr_db,
        high_lpw: f.input_power_mw >= t.power_mw,
        high_acc: f.acceleration_ms2.abs() >= t.accel_ms2,
        abn_hr: f.heart_rate_bpm < t.hr_low_bpm || f.heart_rate_bpm > t.hr_high_bpm,
        high_tmp: f.body_temp_c > t.temp_c,
    })
}

/// Maps threshold flags to a communication class.
///
/// Rules are evaluated top-down and the first match wins; the final row is a
/// catch-all. Because the Unstable condition is the complement of the Full
/// condition, the catch-all `Reduced` is unreachable.
pub fn classify_semantics(b: BinaryFeatures) -> SemanticLabel {
    if b.high_snr && b.high_lpw {
        SemanticLabel::Full
    } else if b.high_snr && !b.high_lpw {
        SemanticLabel::Wide
    } else if (b.high_snr || b.high_lpw) && b.high_acc {
        SemanticLabel::Motion
    } else if (b.abn_hr || b.high_tmp) && !b.high_lpw {
        SemanticLabel::Critical
    } else if !b.high_snr || !b.high_lpw {
        SemanticLabel::Unstable
    } else {
        SemanticLabel::Reduced
    }
}

/// Convenience: binarize then classify.
pub fn label_features(f: &FeatureVector, t: &Thresholds) -> Result<SemanticLabel> {
    Ok(classify_semantics(binarize(f, t)?))
}

/// Enumerates the full rule table over all 32 flag combinations, in index
/// order.
pub fn enumerate_rule_table() -> Vec<(BinaryFeatures, SemanticLabel)> {
    (0..BinaryFeatures::COMBINATIONS as u8)
        .map(|i| {
            let b = BinaryFeatures::from_index(i);
            (b, classify_semantics(b))
        })
        .collect()
}

/// Per-class combination counts of the rule table, indexed by label ordinal.
pub fn rule_table_counts() -> [usize; SemanticLabel::COUNT] {
    let mut counts = [0usize; SemanticLabel::COUNT];
    for (_, label) in enumerate_rule_table() {
        counts[label.ordinal() as usize] += 1;
    }
    counts
}
