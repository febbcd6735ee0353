//! Enrollment and the secured concept exchange.
//!
//! During enrollment (assumed adversary-free) each semantic label is bound to
//! a distinct 128-bit secret shared by the legitimate endpoints. A session
//! classifies an observation, encodes the label into an 8- or 16-bit
//! codeword, and transmits it under friendly jamming: Bob cancels the known
//! pattern and looks the key up; Eve demodulates the superposition and
//! usually misdecodes.
//!
//! Codeword layout: 3-bit label ordinal in the high bits of one byte, five
//! zero padding bits (doubling as an integrity check); the 16-bit form is the
//! byte repeated twice and additionally requires both halves to agree.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_semantic, EnergyParams};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, SemanticLabel};
use crate::neural::Model;
use crate::phychannel::{demodulate, make_jam_pattern, transmit, ChannelParams, ReceiverRole};
use crate::seeding::{derive_indexed_seed, derive_seed, rng_from_seed};
use crate::synthgen::Dataset;

pub const SECRET_BYTES: usize = 16;

/// One 128-bit secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Secret(pub [u8; SECRET_BYTES]);

impl Serialize for Secret {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Secret {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        let arr: [u8; SECRET_BYTES] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("secret must be 16 bytes"))?;
        Ok(Secret(arr))
    }
}

/// Label-to-secret binding created at enrollment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyTable {
    pub enrollment_seed: u64,
    secrets: [Secret; SemanticLabel::COUNT],
}

/// Draws six pairwise-distinct secrets, deterministic per seed.
pub fn enroll(enrollment_seed: u64) -> KeyTable {
    let mut rng = rng_from_seed(derive_seed(enrollment_seed, "enroll"));
    let mut secrets = [Secret([0; SECRET_BYTES]); SemanticLabel::COUNT];
    for i in 0..SemanticLabel::COUNT {
        loop {
            let mut bytes = [0u8; SECRET_BYTES];
            rng.fill_bytes(&mut bytes);
            let candidate = Secret(bytes);
            if !secrets[..i].contains(&candidate) {
                secrets[i] = candidate;
                break;
            }
        }
    }
    KeyTable { enrollment_seed, secrets }
}

impl KeyTable {
    pub fn secret_for(&self, label: SemanticLabel) -> &Secret {
        &self.secrets[label.ordinal() as usize]
    }

    pub fn all_distinct(&self) -> bool {
        for i in 0..self.secrets.len() {
            for j in (i + 1)..self.secrets.len() {
                if self.secrets[i] == self.secrets[j] {
                    return false;
                }
            }
        }
        true
    }
}

/// Concept payload width on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ConceptWidth {
    W8,
    W16,
}

impl ConceptWidth {
    pub fn bits(self) -> usize {
        match self {
            ConceptWidth::W8 => 8,
            ConceptWidth::W16 => 16,
        }
    }
}

impl From<ConceptWidth> for u8 {
    fn from(w: ConceptWidth) -> u8 {
        w.bits() as u8
    }
}

impl TryFrom<u8> for ConceptWidth {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            8 => Ok(ConceptWidth::W8),
            16 => Ok(ConceptWidth::W16),
            other => Err(Error::invalid(format!("concept width must be 8 or 16, got {other}"))),
        }
    }
}

fn byte_to_bits(byte: u8) -> [bool; 8] {
    std::array::from_fn(|i| byte & (1 << (7 - i)) != 0)
}

fn bits_to_byte(bits: &[bool]) -> u8 {
    bits.iter().fold(0u8, |acc, b| (acc << 1) | u8::from(*b))
}

/// Encodes a label into its codeword bits (MSB first).
pub fn encode_concept(label: SemanticLabel, width: ConceptWidth) -> Vec<bool> {
    let codeword = label.ordinal() << 5;
    let byte = byte_to_bits(codeword);
    match width {
        ConceptWidth::W8 => byte.to_vec(),
        ConceptWidth::W16 => byte.iter().chain(byte.iter()).copied().collect(),
    }
}

/// Decodes received bits; `Ok(None)` marks an invalid codeword (corrupt
/// padding, disagreeing halves, or an out-of-range ordinal), distinct from a
/// wrong-but-valid label.
pub fn decode_concept(bits: &[bool], width: ConceptWidth) -> Result<Option<SemanticLabel>> {
    if bits.len() != width.bits() {
        return Err(Error::invalid(format!(
            "expected {} bits, got {}",
            width.bits(),
            bits.len()
        )));
    }
    let byte = match width {
        ConceptWidth::W8 => bits_to_byte(bits),
        ConceptWidth::W16 => {
            let (first, second) = bits.split_at(8);
            if first != second {
                return Ok(None);
            }
            bits_to_byte(first)
        }
    };
    if byte & 0b0001_1111 != 0 {
        return Ok(None);
    }
    let ordinal = byte >> 5;
    Ok(SemanticLabel::from_ordinal(ordinal).ok())
}

/// Per-session seed material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSeeds {
    pub jam_seed: u64,
    pub noise_seed: u64,
}

/// Result of one secured exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionOutcome {
    pub alice_label: SemanticLabel,
    pub bob_label: Option<SemanticLabel>,
    pub eve_label: Option<SemanticLabel>,
    pub bob_key_match: bool,
    pub eve_key_match: bool,
    pub bits_sent: u32,
    pub jam_bits: u32,
}

/// Runs one session: classify, encode, transmit under jamming, demodulate
/// for both roles, and compare looked-up keys. A decode failure is an
/// outcome (no key match), not an error.
pub fn run_session(
    features: &FeatureVector,
    model: &Model,
    keytable: &KeyTable,
    params: &ChannelParams,
    width: ConceptWidth,
    seeds: SessionSeeds,
) -> Result<SessionOutcome> {
    let (alice_label, _probs) = model.classify(features)?;
    let bits = encode_concept(alice_label, width);
    let jam = make_jam_pattern(seeds.jam_seed, width.bits())?;
    let mut noise_rng = rng_from_seed(seeds.noise_seed);
    let t = transmit(&bits, params, &jam, &mut noise_rng)?;

    let bob_bits = demodulate(&t, ReceiverRole::Bob, Some(&jam))?;
    let eve_bits = demodulate(&t, ReceiverRole::Eve, None)?;
    let bob_label = decode_concept(&bob_bits, width)?;
    let eve_label = decode_concept(&eve_bits, width)?;

    let alice_secret = keytable.secret_for(alice_label);
    let key_match = |label: Option<SemanticLabel>| {
        label.map(|l| keytable.secret_for(l) == alice_secret).unwrap_or(false)
    };
    let bob_key_match = key_match(bob_label);
    let eve_key_match = key_match(eve_label);
    debug_assert_eq!(bob_key_match, bob_label == Some(alice_label));
    debug_assert_eq!(eve_key_match, eve_label == Some(alice_label));

    Ok(SessionOutcome {
        alice_label,
        bob_label,
        eve_label,
        bob_key_match,
        eve_key_match,
        bits_sent: width.bits() as u32,
        jam_bits: t.jam_bit_count() as u32,
    })
}

/// Campaign parameters; echoed verbatim into the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_sessions: usize,
    pub width: ConceptWidth,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    pub master_seed: u64,
    pub key_seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_sessions: 10_000,
            width: ConceptWidth::W16,
            channel: ChannelParams::default(),
            energy: EnergyParams::default(),
            master_seed: 42,
            key_seed: 42,
        }
    }
}

/// Counters for one receiver role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleStats {
    pub successes: usize,
    pub decode_failures: usize,
    pub label_mismatches: usize,
    pub success_rate: f64,
    pub decode_failure_rate: f64,
}

impl RoleStats {
    fn from_counts(successes: usize, decode_failures: usize, mismatches: usize, n: usize) -> Self {
        RoleStats {
            successes,
            decode_failures,
            label_mismatches: mismatches,
            success_rate: successes as f64 / n as f64,
            decode_failure_rate: decode_failures as f64 / n as f64,
        }
    }
}

/// Aggregate campaign statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub sessions: usize,
    pub bob: RoleStats,
    pub eve: RoleStats,
    pub alice_label_histogram: [usize; SemanticLabel::COUNT],
    pub total_energy_uj: f64,
    pub mean_energy_per_session_uj: f64,
}

impl CampaignReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("campaign serialization failed: {e}")))
    }
}

/// Runs `n_sessions` independent sessions over rows drawn from the dataset,
/// deterministic per master seed.
pub fn run_campaign(
    dataset: &Dataset,
    model: &Model,
    cfg: &CampaignConfig,
) -> Result<CampaignReport> {
    if cfg.n_sessions < 1 {
        return Err(Error::invalid("campaign needs at least one session"));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("campaign dataset is empty"));
    }
    cfg.channel.validate()?;
    cfg.energy.validate()?;

    let keytable = enroll(cfg.key_seed);
    let mut row_rng = rng_from_seed(derive_seed(cfg.master_seed, "campaign/rows"));

    let mut bob = (0usize, 0usize, 0usize);
    let mut eve = (0usize, 0usize, 0usize);
    let mut histogram = [0usize; SemanticLabel::COUNT];
    let mut total_energy = 0.0;

    use rand::Rng;
    for session in 0..cfg.n_sessions {
        let row = row_rng.gen_range(0..dataset.rows.len());
        let features = dataset.rows[row].0;
        let seeds = SessionSeeds {
            jam_seed: derive_indexed_seed(cfg.master_seed, "campaign/jam", session as u64),
            noise_seed: derive_indexed_seed(cfg.master_seed, "campaign/noise", session as u64),
        };
        let outcome = run_session(&features, model, &keytable, &cfg.channel, cfg.width, seeds)?;
        histogram[outcome.alice_label.ordinal() as usize] += 1;

        let tally = |counts: &mut (usize, usize, usize),
                     label: Option<SemanticLabel>,
                     matched: bool| {
            if matched {
                counts.0 += 1;
            } else if label.is_none() {
                counts.1 += 1;
            } else {
                counts.2 += 1;
            }
        };
        tally(&mut bob, outcome.bob_label, outcome.bob_key_match);
        tally(&mut eve, outcome.eve_label, outcome.eve_key_match);
        total_energy += energy_semantic(outcome.bits_sent, outcome.jam_bits, &cfg.energy)?;
    }

    let n = cfg.n_sessions;
    Ok(CampaignReport {
        config: *cfg,
        sessions: n,
        bob: RoleStats::from_counts(bob.0, bob.1, bob.2, n),
        eve: RoleStats::from_counts(eve.0, eve.1, eve.2, n),
        alice_label_histogram: histogram,
        total_energy_uj: total_energy,
        mean_energy_per_session_uj: total_energy / n as f64,
    })
}
