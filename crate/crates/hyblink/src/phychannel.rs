//! Bit-level model of the hybrid radio/optical link with additive Gaussian
//! noise and a receiver-generated jamming signal.
//!
//! Payload bits are mapped to antipodal symbols (±1) and carried on the radio
//! or optical channel according to the operating mode. The legitimate
//! receiver's jammer injects a seeded antipodal interference waveform on top;
//! it can remove its own waveform exactly, while an eavesdropper sees the
//! superposition and suffers the degraded SINR.
//!
//! Normalization: unit signal amplitude, per-channel noise deviation
//! `sqrt(1 / (2·snr))` with `snr` linear, so an unjammed hard decision has
//! error probability `Q(sqrt(2·snr))`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;

/// Channel allocation of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    AllRadio,
    AllOptical,
    /// Alternate bits across channels; even indices ride the radio channel.
    Hybrid,
}

/// Physical channel a bit is carried on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelId {
    Radio,
    Optical,
}

/// Receiver role in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverRole {
    /// Legitimate receiver; holds the jamming pattern.
    Bob,
    /// Passive eavesdropper; knows everything except the jamming seed.
    Eve,
}

/// Link parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub snr_db_radio: f64,
    pub snr_db_optical: f64,
    /// Jam-to-signal linear power ratio.
    pub jam_power_ratio: f64,
    pub mode: ChannelMode,
    /// Whether the jammer covers the radio channel.
    pub jam_radio: bool,
    /// Whether the jammer covers the optical channel.
    pub jam_optical: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            snr_db_radio: 23.6,
            snr_db_optical: 23.6,
            jam_power_ratio: 4.0,
            mode: ChannelMode::Hybrid,
            jam_radio: true,
            jam_optical: true,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db_radio.is_finite() || !self.snr_db_optical.is_finite() {
            return Err(Error::invalid("channel SNR values must be finite"));
        }
        if !(self.jam_power_ratio >= 0.0) || !self.jam_power_ratio.is_finite() {
            return Err(Error::invalid("jam_power_ratio must be finite and >= 0"));
        }
        Ok(())
    }

    /// Channel carrying bit `index` under the configured mode.
    pub fn channel_for_bit(&self, index: usize) -> ChannelId {
        match self.mode {
            ChannelMode::AllRadio => ChannelId::Radio,
            ChannelMode::AllOptical => ChannelId::Optical,
            ChannelMode::Hybrid => {
                if index % 2 == 0 {
                    ChannelId::Radio
                } else {
                    ChannelId::Optical
                }
            }
        }
    }

    pub fn snr_linear(&self, channel: ChannelId) -> f64 {
        let db = match channel {
            ChannelId::Radio => self.snr_db_radio,
            ChannelId::Optical => self.snr_db_optical,
        };
        10f64.powf(db / 10.0)
    }

    fn jam_enabled(&self, channel: ChannelId) -> bool {
        match channel {
            ChannelId::Radio => self.jam_radio,
            ChannelId::Optical => self.jam_optical,
        }
    }
}

/// One jamming slot: whether the jammer fires and with which antipodal sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JamSlot {
    pub active: bool,
    /// +1 or -1.
    pub symbol: i8,
}

/// Seeded jamming pattern; fully reproducible from `(seed, len)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamPattern {
    pub seed: u64,
    pub slots: Vec<JamSlot>,
}

/// Expands a seed into `n_bits` active antipodal jamming slots.
pub fn make_jam_pattern(seed: u64, n_bits: usize) -> Result<JamPattern> {
    if n_bits == 0 {
        return Err(Error::invalid("jam pattern length must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let slots = (0..n_bits)
        .map(|_| JamSlot {
            active: true,
            symbol: if rng.gen::<bool>() { 1 } else { -1 },
        })
        .collect();
    Ok(JamPattern { seed, slots })
}

/// Valid payload widths for a concept transmission.
pub const PAYLOAD_WIDTHS: [usize; 2] = [8, 16];

/// One transmission as observed on the medium.
///
/// `soft_values[i] = clean_soft[i] + jam_values[i]`; the components are kept
/// so the legitimate receiver's interference cancellation is exact rather
/// than subject to floating-point cancellation error.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub payload_bits: Vec<bool>,
    pub channel_assignment: Vec<ChannelId>,
    /// Jam waveform actually injected per slot (0.0 where the jammer is off).
    pub jam_values: Vec<f64>,
    /// Signal-plus-noise component per slot.
    pub clean_soft: Vec<f64>,
    /// What any antenna on the medium observes per slot.
    pub soft_values: Vec<f64>,
}

impl Transmission {
    pub fn len(&self) -> usize {
        self.payload_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload_bits.is_empty()
    }

    /// Number of slots the jammer actually covered.
    pub fn jam_bit_count(&self) -> usize {
        self.jam_values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Sends `bits` through the link under `params`, jammed by `jam`.
///
/// Exactly one noise sample is drawn per slot, so transmissions with
/// identical seeds but different jamming configurations share their noise
/// realization.
pub fn transmit(
    bits: &[bool],
    params: &ChannelParams,
    jam: &JamPattern,
    rng: &mut ChaCha8Rng,
) -> Result<Transmission> {
    params.validate()?;
    if !PAYLOAD_WIDTHS.contains(&bits.len()) {
        return Err(Error::invalid(format!(
            "payload must be 8 or 16 bits, got {}",
            bits.len()
        )));
    }
    if jam.slots.len() != bits.len() {
        return Err(Error::invalid(format!(
            "jam pattern length {} does not match payload length {}",
            jam.slots.len(),
            bits.len()
        )));
    }

    let jam_amp = params.jam_power_ratio.sqrt();
    let n = bits.len();
    let mut assignment = Vec::with_capacity(n);
    let mut jam_values = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut soft = Vec::with_capacity(n);

    for (i, &bit) in bits.iter().enumerate() {
        let channel = params.channel_for_bit(i);
        let symbol = if bit { 1.0 } else { -1.0 };
        let sigma = (1.0 / (2.0 * params.snr_linear(channel))).sqrt();
        let noise: f64 = rng.sample(StandardNormal);
        let slot = jam.slots[i];
        let jam_value = if slot.active && params.jam_enabled(channel) && jam_amp > 0.0 {
            jam_amp * f64::from(slot.symbol)
        } else {
            0.0
        };
        let clean_value = symbol + sigma * noise;
        assignment.push(channel);
        jam_values.push(jam_value);
        clean.push(clean_value);
        soft.push(clean_value + jam_value);
    }

    Ok(Transmission {
        payload_bits: bits.to_vec(),
        channel_assignment: assignment,
        jam_values,
        clean_soft: clean,
        soft_values: soft,
    })
}

/// Hard-decides the received bits for the given role.
///
/// Bob must supply the jamming pattern and gets ideal cancellation: his
/// decision statistic is the signal-plus-noise component, recovered after the
/// supplied pattern is checked against the injected waveform. Eve must not
/// supply a pattern and decides on the raw superposition.
pub fn demodulate(
    t: &Transmission,
    role: ReceiverRole,
    jam: Option<&JamPattern>,
) -> Result<Vec<bool>> {
    match role {
        ReceiverRole::Bob => {
            let pattern = jam.ok_or_else(|| {
                Error::Protocol("legitimate receiver requires the jamming pattern".into())
            })?;
            if pattern.slots.len() != t.len() {
                return Err(Error::Protocol(format!(
                    "jamming pattern length {} does not match transmission length {}",
                    pattern.slots.len(),
                    t.len()
                )));
            }
            for (i, slot) in pattern.slots.iter().enumerate() {
                let injected = t.jam_values[i];
                if injected != 0.0 && injected.signum() != f64::from(slot.symbol) {
                    return Err(Error::Protocol(
                        "jamming pattern does not match the injected waveform".into(),
                    ));
                }
            }
            Ok(t.clean_soft.iter().map(|&v| v >= 0.0).collect())
        }
        ReceiverRole::Eve => {
            if jam.is_some() {
                return Err(Error::Protocol(
                    "eavesdropper must not hold the jamming pattern".into(),
                ));
            }
            Ok(t.soft_values.iter().map(|&v| v >= 0.0).collect())
        }
    }
}

/// Bit error probability of antipodal signaling at linear SINR:
/// `Q(sqrt(2·sinr))`, evaluated through the complementary error function.
pub fn ber_for_sinr(sinr_linear: f64) -> Result<f64> {
    if !(sinr_linear >= 0.0) || !sinr_linear.is_finite() {
        return Err(Error::invalid(format!(
            "sinr must be finite and >= 0, got {sinr_linear}"
        )));
    }
    Ok(0.5 * libm::erfc(sinr_linear.sqrt()))
}

/// Eavesdropper's effective SINR when the antipodal jam is treated as extra
/// noise power: `snr / (1 + 2·ratio·snr)`. A Gaussian approximation used for
/// reporting; the jam itself is binary.
pub fn eve_effective_sinr(snr_linear: f64, jam_power_ratio: f64) -> f64 {
    snr_linear / (1.0 + 2.0 * jam_power_ratio * snr_linear)
}

/// Monte-Carlo bit error rate of an unjammed antipodal link at the given
/// linear SINR, over `n_bits` random bits.
///
/// Uses the amplitude form `y = sqrt(2·sinr)·s + n` with unit noise so that
/// `sinr = 0` degenerates cleanly to coin-flip decisions.
pub fn simulate_ber(sinr_linear: f64, n_bits: usize, seed: u64) -> Result<f64> {
    if !(sinr_linear >= 0.0) || !sinr_linear.is_finite() {
        return Err(Error::invalid(format!(
            "sinr must be finite and >= 0, got {sinr_linear}"
        )));
    }
    if n_bits == 0 {
        return Err(Error::invalid("n_bits must be at least 1"));
    }
    let amplitude = (2.0 * sinr_linear).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut errors = 0usize;
    for _ in 0..n_bits {
        let bit = rng.gen::<bool>();
        let symbol = if bit { 1.0 } else { -1.0 };
        let noise: f64 = rng.sample(StandardNormal);
        let decided = amplitude * symbol + noise >= 0.0;
        if decided != bit {
            errors += 1;
        }
    }
    Ok(errors as f64 / n_bits as f64)
}
