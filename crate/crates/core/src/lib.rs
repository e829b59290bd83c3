//! Metric differential privacy (dχ-privacy) for token sequences.
//!
//! The crate privatizes text at the token level: each token embedding is
//! perturbed with noise whose density decays as `exp(-eta * |N|)`, and the
//! perturbed vector is optionally mapped back to its nearest vocabulary
//! token. Around that mechanism it provides measurement tools
//! (embedding geometry, plausible-deniability statistics, a
//! nearest-neighbor inversion attack), privacy-adaptive masked-LM targets
//! and losses, and a linear probe for desk-scale utility experiments.

pub mod analysis;
pub mod embedding;
pub mod error;
pub mod mechanism;
pub mod mlm;
pub mod probe;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod tokenizer;

pub use embedding::{load_table, Candidates, EmbeddingTable, TableFormat, TokenId, Vocabulary};
pub use error::{Error, Result};
pub use mechanism::{
    perturb_embedding, sample_noise, sequence_distance, Mode, NoiseSample, PrivacyParams,
    PrivatizedSequence, Privatizer,
};
pub use rng::{RngStream, StreamFamily};
pub use tokenizer::{detokenize, tokenize, TokenSequence};
