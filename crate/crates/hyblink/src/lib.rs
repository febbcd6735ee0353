//! Desk-scale simulator of a secured hybrid (radio + optical) body-area
//! link.
//!
//! The pipeline: synthesize labeled observations from per-feature statistics
//! ([`synthgen`]), reduce them to semantic communication classes through a
//! threshold rule engine ([`features`]) or a small trained neural classifier
//! ([`neural`]), exchange the class over a jammed bit-level channel where
//! only the legitimate receiver can cancel the interference ([`phychannel`],
//! [`protocol`]), and account for the energy spent versus an ECDH key
//! exchange ([`energy`]). [`eval`] holds the reporting metrics.
//!
//! All randomness flows from explicit 64-bit seeds ([`seeding`]); every
//! artifact (dataset CSV, model container, reports) is byte-reproducible for
//! a fixed master seed.

pub mod energy;
pub mod error;
pub mod eval;
pub mod features;
pub mod neural;
pub mod phychannel;
pub mod protocol;
pub mod seeding;
pub mod synthgen;

pub use error::{Error, Result};
pub use features::{
    binarize, classify_semantics, enumerate_rule_table, label_features, rule_table_counts,
    BinaryFeatures, FeatureVector, SemanticLabel, Thresholds,
};
pub use neural::{
    grad_check, init_model, load_model, quantize, save_model, train_autoencoder,
    train_classifier, Model, QuantizedModel, TrainConfig,
};
pub use phychannel::{
    ber_for_sinr, demodulate, make_jam_pattern, simulate_ber, transmit, ChannelMode,
    ChannelParams, JamPattern, ReceiverRole, Transmission,
};
pub use protocol::{
    decode_concept, encode_concept, enroll, run_campaign, run_session, CampaignConfig,
    CampaignReport, ConceptWidth, KeyTable, SessionOutcome,
};
pub use synthgen::{
    augment, generate_dataset, load_dataset, sample_feature, save_dataset, split, Dataset,
    FeatureStats, FeatureStatsTable,
};
