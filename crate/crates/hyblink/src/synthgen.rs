//! Labeled dataset synthesis: truncated-Gaussian feature draws per the
//! configured per-feature statistics, plus augmentation of existing rows and
//! a seeded train/validation split.
//!
//! On disk a dataset is a CSV file
//! (`snr_db,input_power_mw,acceleration_ms2,heart_rate_bpm,body_temp_c,label`,
//! LF line endings, label as ordinal 0..5) with a JSON sidecar carrying the
//! seed, size, thresholds and schema version.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{classify_semantics, binarize, FeatureVector, SemanticLabel, Thresholds};
use crate::seeding::rng_from_seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Summary statistics of one feature: the generator draws
/// Normal(mean, std_dev) truncated to [min, max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl FeatureStats {
    pub fn new(mean: f64, std_dev: f64, min: f64, max: f64) -> Self {
        FeatureStats { mean, std_dev, min, max }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.mean, self.std_dev, self.min, self.max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature stats must be finite"));
        }
        if !(self.std_dev > 0.0) {
            return Err(Error::invalid("std_dev must be positive"));
        }
        if !(self.min < self.max) {
            return Err(Error::invalid("min must be below max"));
        }
        if self.mean < self.min || self.mean > self.max {
            return Err(Error::invalid("mean must lie within [min, max]"));
        }
        Ok(())
    }
}

/// Per-feature statistics table, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureStatsTable {
    pub snr_db: FeatureStats,
    pub input_power_mw: FeatureStats,
    pub acceleration_ms2: FeatureStats,
    pub heart_rate_bpm: FeatureStats,
    pub body_temp_c: FeatureStats,
}

impl Default for FeatureStatsTable {
    fn default() -> Self {
        FeatureStatsTable {
            snr_db: FeatureStats::new(23.6, 4.23, 17.57, 33.32),
            input_power_mw: FeatureStats::new(0.07, 0.03, 0.02, 0.09),
            acceleration_ms2: FeatureStats::new(0.0, 0.1, -0.5, 0.5),
            heart_rate_bpm: FeatureStats::new(60.0, 25.0, 50.0, 120.0),
            body_temp_c: FeatureStats::new(36.0, 2.0, 34.0, 42.0),
        }
    }
}

impl FeatureStatsTable {
    pub fn as_array(&self) -> [FeatureStats; 5] {
        [
            self.snr_db,
            self.input_power_mw,
            self.acceleration_ms2,
            self.heart_rate_bpm,
            self.body_temp_c,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for stats in self.as_array() {
            stats.validate()?;
        }
        Ok(())
    }
}

/// A labeled dataset in generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<(FeatureVector, SemanticLabel)>,
    pub seed: u64,
    pub schema_version: u32,
    pub thresholds: Thresholds,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureVector> + Clone {
        self.rows.iter().map(|(f, _)| f)
    }

    pub fn labels(&self) -> impl Iterator<Item = SemanticLabel> + '_ {
        self.rows.iter().map(|(_, l)| *l)
    }

    /// Per-class row counts, indexed by label ordinal.
    pub fn label_histogram(&self) -> [usize; SemanticLabel::COUNT] {
        let mut counts = [0usize; SemanticLabel::COUNT];
        for (_, label) in &self.rows {
            counts[label.ordinal() as usize] += 1;
        }
        counts
    }
}

const MAX_REJECTIONS: usize = 100;

/// Draws Normal(mean, std) truncated to [min, max] by rejection, clamping
/// after `MAX_REJECTIONS` failed draws. A zero deviation degenerates to the
/// clamped mean without consuming randomness.
fn sample_truncated(mean: f64, std_dev: f64, min: f64, max: f64, rng: &mut ChaCha8Rng) -> f64 {
    if std_dev == 0.0 {
        return mean.clamp(min, max);
    }
    let normal = Normal::new(mean, std_dev).expect("validated std_dev");
    for _ in 0..MAX_REJECTIONS {
        let v = normal.sample(rng);
        if v >= min && v <= max {
            return v;
        }
    }
    normal.sample(rng).clamp(min, max)
}

/// Draws one feature value per its statistics.
pub fn sample_feature(stats: &FeatureStats, rng: &mut ChaCha8Rng) -> f64 {
    sample_truncated(stats.mean, stats.std_dev, stats.min, stats.max, rng)
}

/// Draws a full feature vector in canonical column order.
pub fn sample_feature_vector(stats: &FeatureStatsTable, rng: &mut ChaCha8Rng) -> FeatureVector {
    FeatureVector {
        snr_db: sample_feature(&stats.snr_db, rng),
        input_power_mw: sample_feature(&stats.input_power_mw, rng),
        acceleration_ms2: sample_feature(&stats.acceleration_ms2, rng),
        heart_rate_bpm: sample_feature(&stats.heart_rate_bpm, rng),
        body_temp_c: sample_feature(&stats.body_temp_c, rng),
    }
}

/// Expands each base row into `factor` noisy copies: every field is re-drawn
/// from Normal(base value, field std_dev × std_scale), truncated to the
/// field's range.
pub fn augment(
    base_rows: &[FeatureVector],
    factor: usize,
    stats: &FeatureStatsTable,
    std_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FeatureVector>> {
    if base_rows.is_empty() {
        return Err(Error::invalid("augment requires at least one base row"));
    }
    if factor < 1 {
        return Err(Error::invalid("augmentation factor must be at least 1"));
    }
    if !(std_scale >= 0.0) || !std_scale.is_finite() {
        return Err(Error::invalid("std_scale must be finite and >= 0"));
    }
    stats.validate()?;
    let table = stats.as_array();
    let mut out = Vec::with_capacity(base_rows.len() * factor);
    for base in base_rows {
        let fields = base.as_array();
        for _ in 0..factor {
            let mut drawn = [0.0f64; 5];
            for (k, value) in fields.iter().enumerate() {
                let s = table[k];
                drawn[k] =
                    sample_truncated(*value, s.std_dev * std_scale, s.min, s.max, rng);
            }
            out.push(FeatureVector::from_array(drawn));
        }
    }
    Ok(out)
}

/// Generates a labeled dataset of `size` rows, deterministic per seed.
pub fn generate_dataset(
    size: usize,
    seed: u64,
    thresholds: &Thresholds,
    stats: &FeatureStatsTable,
) -> Result<Dataset> {
    if size < 1 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    thresholds.validate()?;
    stats.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(size);
    for _ in 0..size {
        let f = sample_feature_vector(stats, &mut rng);
        let label = classify_semantics(binarize(&f, thresholds)?);
        rows.push((f, label));
    }
    Ok(Dataset {
        rows,
        seed,
        schema_version: SCHEMA_VERSION,
        thresholds: *thresholds,
    })
}

/// Seeded shuffle followed by a split at `round(len × train_fraction)`;
/// the parts are disjoint and jointly exhaustive.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if d.rows.len() < 2 {
        return Err(Error::invalid("split requires at least two rows"));
    }
    let mut indices: Vec<usize> = (0..d.rows.len()).collect();
    let mut rng = rng_from_seed(seed);
    // Fisher-Yates via rand's shuffle keeps the order deterministic per seed.
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng);

    let cut = ((d.rows.len() as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(1, d.rows.len() - 1);
    let take = |idx: &[usize]| Dataset {
        rows: idx.iter().map(|&i| d.rows[i]).collect(),
        seed: d.seed,
        schema_version: d.schema_version,
        thresholds: d.thresholds,
    };
    Ok((take(&indices[..cut]), take(&indices[cut..])))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    snr_db: f64,
    input_power_mw: f64,
    acceleration_ms2: f64,
    heart_rate_bpm: f64,
    body_temp_c: f64,
    label: u8,
}

/// JSON sidecar schema stored next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    pub seed: u64,
    pub size: usize,
    pub thresholds: Thresholds,
}

/// Sidecar path convention: `data.csv` → `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the dataset CSV and its JSON sidecar.
pub fn save_dataset(d: &Dataset, csv_path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for (f, label) in &d.rows {
        writer
            .serialize(CsvRow {
                snr_db: f.snr_db,
                input_power_mw: f.input_power_mw,
                acceleration_ms2: f.acceleration_ms2,
                heart_rate_bpm: f.heart_rate_bpm,
                body_temp_c: f.body_temp_c,
                label: label.ordinal(),
            })
            .map_err(|e| Error::DatasetFormat(format!("csv write failed: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::DatasetFormat(format!("csv flush failed: {e}")))?;
    fs::write(csv_path, bytes)?;

    let sidecar = DatasetSidecar {
        schema_version: d.schema_version,
        seed: d.seed,
        size: d.rows.len(),
        thresholds: d.thresholds,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::DatasetFormat(format!("sidecar serialization failed: {e}")))?;
    fs::write(sidecar_path(csv_path), json + "\n")?;
    Ok(())
}

/// Loads a dataset CSV plus sidecar, validating row count and label range.
pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let sidecar_file = sidecar_path(csv_path);
    let sidecar_text = fs::read_to_string(&sidecar_file).map_err(|e| {
        Error::DatasetFormat(format!(
            "missing or unreadable sidecar {}: {e}",
            sidecar_file.display()
        ))
    })?;
    let sidecar: DatasetSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::DatasetFormat(format!("sidecar parse failed: {e}")))?;
    if sidecar.schema_version != SCHEMA_VERSION {
        return Err(Error::DatasetFormat(format!(
            "unsupported schema version {}",
            sidecar.schema_version
        )));
    }

    let mut reader = csv::ReaderBuilder::new()
        .from_path(csv_path)
        .map_err(|e| Error::DatasetFormat(format!("csv open failed: {e}")))?;
    let mut rows = Vec::with_capacity(sidecar.size);
    for record in reader.deserialize::<CsvRow>() {
        let row = record.map_err(|e| Error::DatasetFormat(format!("csv parse failed: {e}")))?;
        let f = FeatureVector {
            snr_db: row.snr_db,
            input_power_mw: row.input_power_mw,
            acceleration_ms2: row.acceleration_ms2,
            heart_rate_bpm: row.heart_rate_bpm,
            body_temp_c: row.body_temp_c,
        };
        if !f.is_finite() {
            return Err(Error::DatasetFormat("non-finite feature value".into()));
        }
        let label = SemanticLabel::from_ordinal(row.label)
            .map_err(|_| Error::DatasetFormat(format!("label ordinal {} out of range", row.label)))?;
        rows.push((f, label));
    }
    if rows.len() != sidecar.size {
        return Err(Error::DatasetFormat(format!(
            "row count {} does not match sidecar size {}",
            rows.len(),
            sidecar.size
        )));
    }
    Ok(Dataset {
        rows,
        seed: sidecar.seed,
        schema_version: sidecar.schema_version,
        thresholds: sidecar.thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Simpson quadrature of the truncated normal's mean and deviation over
    /// [min, max]; independent of the sampling implementation.
    fn truncated_oracle(s: &FeatureStats) -> (f64, f64) {
        let density = |x: f64| {
            let z = (x - s.mean) / s.std_dev;
            (-0.5 * z * z).exp()
        };
        let n = 200_000usize;
        let h = (s.max - s.min) / n as f64;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let x = s.min + h * i as f64;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let d = w * density(x);
            m0 += d;
            m1 += d * x;
            m2 += d * x * x;
        }
        let mean = m1 / m0;
        let var = m2 / m0 - mean * mean;
        (mean, var.max(0.0).sqrt())
    }

    #[test]
    fn samples_stay_in_range() {
        let stats = FeatureStats::new(36.0, 2.0, 34.0, 42.0);
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let v = sample_feature(&stats, &mut rng);
            assert!((34.0..=42.0).contains(&v), "out of range: {v}");
        }
    }

    #[test]
    fn degenerate_deviation_returns_mean() {
        let mut rng = rng_from_seed(1);
        let stats = FeatureStats::new(0.0, 1e-12, -1.0, 1.0);
        let v = sample_feature(&stats, &mut rng);
        assert!(v.abs() < 1e-9, "expected ≈0, got {v}");
    }

    #[test]
    fn empirical_means_match_truncated_oracle() {
        // 1e5 draws per feature; sample mean within 5 standard errors of the
        // quadrature oracle (truncation shifts e.g. the SNR mean to ≈24.14).
        let table = FeatureStatsTable::default();
        for (k, stats) in table.as_array().iter().enumerate() {
            let (oracle_mean, oracle_std) = truncated_oracle(stats);
            let n = 100_000usize;
            let mut rng = rng_from_seed(1000 + k as u64);
            let sum: f64 = (0..n).map(|_| sample_feature(stats, &mut rng)).sum();
            let mean = sum / n as f64;
            let se = oracle_std / (n as f64).sqrt();
            assert!(
                (mean - oracle_mean).abs() < 5.0 * se,
                "feature {k}: mean {mean} vs oracle {oracle_mean} (se {se})"
            );
        }
    }

    #[test]
    fn snr_truncation_bias_is_visible() {
        // The truncated SNR mean sits ≈0.54 dB above the nominal 23.6.
        let (mean, _) = truncated_oracle(&FeatureStatsTable::default().snr_db);
        assert!((mean - 24.1377).abs() < 1e-3, "oracle mean {mean}");
    }

    #[test]
    fn dataset_generation_is_deterministic_and_labeled() {
        let t = Thresholds::default();
        let stats = FeatureStatsTable::default();
        let a = generate_dataset(512, 42, &t, &stats).unwrap();
        let b = generate_dataset(512, 42, &t, &stats).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 512);
        for (f, label) in &a.rows {
            assert_eq!(classify_semantics(binarize(f, &t).unwrap()), *label);
        }
        let c = generate_dataset(512, 43, &t, &stats).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_values_in_table_ranges() {
        let d = generate_dataset(2040, 42, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        let table = FeatureStatsTable::default().as_array();
        for (f, _) in &d.rows {
            for (k, v) in f.as_array().iter().enumerate() {
                assert!(
                    *v >= table[k].min && *v <= table[k].max,
                    "feature {k} out of range: {v}"
                );
            }
        }
    }

    #[test]
    fn single_row_dataset() {
        let t = Thresholds::default();
        let d = generate_dataset(1, 7, &t, &FeatureStatsTable::default()).unwrap();
        assert_eq!(d.len(), 1);
        let (f, label) = d.rows[0];
        assert_eq!(classify_semantics(binarize(&f, &t).unwrap()), label);
        assert!(generate_dataset(0, 7, &t, &FeatureStatsTable::default()).is_err());
    }

    #[test]
    fn golden_label_histogram_seed42() {
        let d = generate_dataset(2040, 42, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        assert_eq!(d.label_histogram(), GOLDEN_HISTOGRAM_SEED42);
    }

    // Frozen from the first generation run at seed 42; the distribution is
    // dominated by Full/Wide with small Motion/Critical minorities, matching
    // the truncated-normal threshold probabilities.
    const GOLDEN_HISTOGRAM_SEED42: [usize; 6] = [1341, 565, 32, 21, 81, 0];

    #[test]
    fn augmentation_counts_and_ranges() {
        let stats = FeatureStatsTable::default();
        let mut rng = rng_from_seed(5);
        let base: Vec<FeatureVector> =
            (0..40).map(|_| sample_feature_vector(&stats, &mut rng)).collect();
        let out = augment(&base, 50, &stats, 1.0, &mut rng).unwrap();
        assert_eq!(out.len(), 2000);
        for f in &out {
            assert!(f.snr_db >= 17.57 && f.snr_db <= 33.32, "snr {}", f.snr_db);
        }
    }

    #[test]
    fn augmentation_identity_at_zero_scale() {
        let stats = FeatureStatsTable::default();
        let mut rng = rng_from_seed(6);
        let base: Vec<FeatureVector> =
            (0..5).map(|_| sample_feature_vector(&stats, &mut rng)).collect();
        let out = augment(&base, 1, &stats, 0.0, &mut rng).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn augmentation_rejects_bad_input() {
        let stats = FeatureStatsTable::default();
        let mut rng = rng_from_seed(6);
        assert!(augment(&[], 50, &stats, 1.0, &mut rng).is_err());
        let base = vec![sample_feature_vector(&stats, &mut rng)];
        assert!(augment(&base, 0, &stats, 1.0, &mut rng).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = generate_dataset(2040, 42, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        let (train, val) = split(&d, 0.8, 7).unwrap();
        assert_eq!(train.len(), 1632);
        assert_eq!(val.len(), 408);

        // Multiset equality with the original rows.
        let key = |f: &FeatureVector, l: SemanticLabel| {
            (f.as_array().map(f64::to_bits), l.ordinal())
        };
        let mut counts: BTreeMap<_, i64> = BTreeMap::new();
        for (f, l) in &d.rows {
            *counts.entry(key(f, *l)).or_default() += 1;
        }
        for (f, l) in train.rows.iter().chain(&val.rows) {
            *counts.entry(key(f, *l)).or_default() -= 1;
        }
        assert!(counts.values().all(|&c| c == 0));

        let (train2, val2) = split(&d, 0.8, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = generate_dataset(10, 1, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
        assert!(split(&d, -0.5, 1).is_err());
    }

    #[test]
    fn save_load_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        let d = generate_dataset(64, 42, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        save_dataset(&d, &path_a).unwrap();
        save_dataset(&d, &path_b).unwrap();
        assert_eq!(fs::read(&path_a).unwrap(), fs::read(&path_b).unwrap());
        assert_eq!(
            fs::read(sidecar_path(&path_a)).unwrap(),
            fs::read(sidecar_path(&path_b)).unwrap()
        );

        let loaded = load_dataset(&path_a).unwrap();
        assert_eq!(loaded, d);
        // Label faithfulness: stored labels reproduce under the rule engine.
        for (f, l) in &loaded.rows {
            assert_eq!(classify_semantics(binarize(f, &loaded.thresholds).unwrap()), *l);
        }
    }

    #[test]
    fn csv_header_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = generate_dataset(4, 1, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        save_dataset(&d, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "snr_db,input_power_mw,acceleration_ms2,heart_rate_bpm,body_temp_c,label\n"
        ));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = generate_dataset(8, 1, &Thresholds::default(), &FeatureStatsTable::default())
            .unwrap();
        save_dataset(&d, &path).unwrap();

        // Bad label ordinal.
        let text = fs::read_to_string(&path).unwrap();
        let hacked = text.replace("\n", "\n").lines().enumerate().map(|(i, l)| {
            if i == 1 {
                let mut parts: Vec<&str> = l.split(',').collect();
                parts[5] = "9";
                parts.join(",")
            } else {
                l.to_string()
            }
        }).collect::<Vec<_>>().join("\n") + "\n";
        fs::write(&path, hacked).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::DatasetFormat(_))));

        // Truncated file: row count disagrees with sidecar.
        save_dataset(&d, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(5).collect();
        fs::write(&path, truncated.join("\n") + "\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::DatasetFormat(_))));

        // Missing sidecar.
        save_dataset(&d, &path).unwrap();
        fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::DatasetFormat(_))));
    }

    proptest! {
        #[test]
        fn sampled_values_respect_arbitrary_ranges(
            mean in -50.0f64..50.0,
            std in 0.01f64..20.0,
            half_width in 0.5f64..30.0,
            seed in 0u64..1000,
        ) {
            let stats = FeatureStats::new(mean, std, mean - half_width, mean + half_width);
            prop_assert!(stats.validate().is_ok());
            let mut rng = rng_from_seed(seed);
            for _ in 0..50 {
                let v = sample_feature(&stats, &mut rng);
                prop_assert!(v >= stats.min && v <= stats.max);
            }
        }
    }
}
