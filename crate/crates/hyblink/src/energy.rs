//! Transmission-energy accounting: semantic concept transfer (with optional
//! jamming) versus an ECDH key exchange of a given key length.
//!
//! Only bits on the air are billed; ECDH computation cost is deliberately
//! excluded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-bit energy constants, microjoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    /// Cost to transmit one bit.
    pub e_bit_uj: f64,
    /// Cost to jam one bit.
    pub e_jam_uj: f64,
    /// Number of key-length messages billed for an ECDH exchange.
    pub ecdh_messages: u32,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            e_bit_uj: 0.1,
            e_jam_uj: 0.2,
            ecdh_messages: 1,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_bit_uj >= 0.0) || !(self.e_jam_uj >= 0.0) {
            return Err(Error::invalid("energy constants must be non-negative"));
        }
        Ok(())
    }
}

/// Energy (μJ) of one semantic transmission of `n_bits` with `jam_bits`
/// jammed slots.
pub fn energy_semantic(n_bits: u32, jam_bits: u32, p: &EnergyParams) -> Result<f64> {
    p.validate()?;
    if jam_bits > n_bits {
        return Err(Error::invalid(format!(
            "jam_bits ({jam_bits}) exceeds n_bits ({n_bits})"
        )));
    }
    Ok(f64::from(n_bits) * p.e_bit_uj + f64::from(jam_bits) * p.e_jam_uj)
}

/// Transmission energy (μJ) of an ECDH exchange with `key_bits`-bit keys.
pub fn energy_ecdh(key_bits: u32, p: &EnergyParams) -> Result<f64> {
    p.validate()?;
    if key_bits == 0 {
        return Err(Error::invalid("key_bits must be at least 1"));
    }
    Ok(f64::from(p.ecdh_messages) * f64::from(key_bits) * p.e_bit_uj)
}

/// One scheme to include in a comparison report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeConfig {
    /// Semantic concept transfer: payload bits and jammed bits.
    Semantic { bits: u32, jam_bits: u32 },
    /// ECDH exchange with the given key length.
    Ecdh { key_bits: u32 },
}

/// One row of the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub scheme: String,
    pub bits: u32,
    pub jam_bits: u32,
    pub energy_uj: f64,
    pub ratio_vs_ecdh160: f64,
}

/// Builds the comparison table, sorted ascending by energy.
///
/// The ratio column is taken against an ECDH-160 exchange under the same
/// parameters, whether or not that scheme is among the rows.
pub fn compare_report(configs: &[SchemeConfig], p: &EnergyParams) -> Result<Vec<EnergyRow>> {
    let baseline = energy_ecdh(160, p)?;
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let row = match *cfg {
            SchemeConfig::Semantic { bits, jam_bits } => {
                let scheme = if jam_bits == 0 {
                    format!("SC{bits}")
                } else {
                    format!("SC{bits}+jam{jam_bits}")
                };
                EnergyRow {
                    scheme,
                    bits,
                    jam_bits,
                    energy_uj: energy_semantic(bits, jam_bits, p)?,
                    ratio_vs_ecdh160: 0.0,
                }
            }
            SchemeConfig::Ecdh { key_bits } => EnergyRow {
                scheme: format!("ECDH-{key_bits}"),
                bits: key_bits,
                jam_bits: 0,
                energy_uj: energy_ecdh(key_bits, p)?,
                ratio_vs_ecdh160: 0.0,
            },
        };
        rows.push(row);
    }
    for row in &mut rows {
        row.ratio_vs_ecdh160 = if baseline > 0.0 { row.energy_uj / baseline } else { f64::NAN };
    }
    rows.sort_by(|a, b| {
        a.energy_uj
            .partial_cmp(&b.energy_uj)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.scheme.cmp(&b.scheme))
    });
    Ok(rows)
}

/// The canonical six-row comparison: SC8/SC16 bare and fully jammed, plus
/// ECDH-160 and ECDH-256.
pub fn default_comparison() -> Vec<SchemeConfig> {
    vec![
        SchemeConfig::Semantic { bits: 8, jam_bits: 0 },
        SchemeConfig::Semantic { bits: 16, jam_bits: 0 },
        SchemeConfig::Semantic { bits: 8, jam_bits: 8 },
        SchemeConfig::Semantic { bits: 16, jam_bits: 16 },
        SchemeConfig::Ecdh { key_bits: 160 },
        SchemeConfig::Ecdh { key_bits: 256 },
    ]
}

/// Serializes rows as CSV (`scheme,bits,jam_bits,energy_uj,ratio_vs_ecdh160`).
pub fn report_to_csv(rows: &[EnergyRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::invalid(format!("csv serialization failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv not utf-8: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn semantic_energy_values() {
        let p = EnergyParams::default();
        // 8×0.1, 8×0.1 + 8×0.2, 16×0.1 + 16×0.2.
        assert!((energy_semantic(8, 0, &p).unwrap() - 0.8).abs() < 1e-12);
        assert!((energy_semantic(8, 8, &p).unwrap() - 2.4).abs() < 1e-12);
        assert!((energy_semantic(16, 16, &p).unwrap() - 4.8).abs() < 1e-12);
    }

    #[test]
    fn ecdh_energy_values() {
        let p = EnergyParams::default();
        assert!((energy_ecdh(160, &p).unwrap() - 16.0).abs() < 1e-12);
        assert!((energy_ecdh(256, &p).unwrap() - 25.6).abs() < 1e-12);
        let zero = EnergyParams { e_bit_uj: 0.0, e_jam_uj: 0.0, ecdh_messages: 1 };
        assert_eq!(energy_ecdh(160, &zero).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = EnergyParams::default();
        assert!(energy_semantic(8, 9, &p).is_err());
        assert!(energy_ecdh(0, &p).is_err());
        let bad = EnergyParams { e_bit_uj: -0.1, ..EnergyParams::default() };
        assert!(energy_semantic(8, 0, &bad).is_err());
    }

    #[test]
    fn report_rows_and_ratios() {
        let rows = compare_report(&default_comparison(), &EnergyParams::default()).unwrap();
        assert_eq!(rows.len(), 6);
        // Sorted ascending by energy.
        for pair in rows.windows(2) {
            assert!(pair[0].energy_uj <= pair[1].energy_uj);
        }
        let energies: Vec<f64> = rows.iter().map(|r| r.energy_uj).collect();
        let expected = [0.8, 1.6, 2.4, 4.8, 16.0, 25.6];
        for (e, x) in energies.iter().zip(expected) {
            assert!((e - x).abs() < 1e-12, "got {e}, want {x}");
        }
        // SC16+jam16 vs ECDH-160.
        let sc16jam = rows.iter().find(|r| r.scheme == "SC16+jam16").unwrap();
        assert!((sc16jam.ratio_vs_ecdh160 - 0.3).abs() < 1e-12);
        // Ratio definition holds on every row.
        for r in &rows {
            assert!((r.ratio_vs_ecdh160 - r.energy_uj / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn every_semantic_row_cheaper_than_every_ecdh_row() {
        let rows = compare_report(&default_comparison(), &EnergyParams::default()).unwrap();
        let (sc, ecdh): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.scheme.starts_with("SC"));
        for s in &sc {
            for e in &ecdh {
                assert!(s.energy_uj < e.energy_uj, "{} !< {}", s.scheme, e.scheme);
            }
        }
    }

    #[test]
    fn csv_header_and_shape() {
        let rows = compare_report(&default_comparison(), &EnergyParams::default()).unwrap();
        let csv = report_to_csv(&rows).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scheme,bits,jam_bits,energy_uj,ratio_vs_ecdh160"
        );
        assert_eq!(csv.lines().count(), 7);
    }

    proptest! {
        /// Additive and homogeneous in the bit counts, and monotone.
        #[test]
        fn linearity(n in 0u32..1000, j in 0u32..1000, k in 1u32..4) {
            prop_assume!(j <= n);
            let p = EnergyParams::default();
            let single = energy_semantic(n, j, &p).unwrap();
            let scaled = energy_semantic(k * n, k * j, &p).unwrap();
            prop_assert!((scaled - f64::from(k) * single).abs() < 1e-9);
            if n > 0 {
                let fewer = energy_semantic(n - 1, j.min(n - 1), &p).unwrap();
                prop_assert!(fewer <= single + 1e-12);
            }
        }
    }
}
