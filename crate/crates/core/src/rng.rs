//! Counter-based random streams.
//!
//! Every random draw in the crate comes from an [`RngStream`] identified by
//! the tuple `(master_seed, context, item, trial)`. The tuple is expanded
//! into a 256-bit ChaCha20 key by running each field through SplitMix64
//! finalizers chained over the previous lanes, so the key for one identity
//! never depends on which other identities were drawn before it, or on which
//! thread drew them.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Well-known context ids. Each consumer keys its streams with its own
/// context so that, e.g., mask selection and perturbation never share draws.
pub mod context {
    pub const PRIVATIZE: u64 = 0x01;
    pub const DENIABILITY: u64 = 0x02;
    pub const INVERSION: u64 = 0x03;
    pub const GEOMETRY: u64 = 0x04;
    pub const EXAMPLES: u64 = 0x05;
    pub const MASK_SELECT: u64 = 0x10;
    pub const MASK_TARGET: u64 = 0x11;
    pub const PRETRAIN_CONTEXT: u64 = 0x12;
    pub const PROBE_TRAIN: u64 = 0x20;
    pub const PROBE_EVAL: u64 = 0x21;
    pub const PROBE_INIT: u64 = 0x22;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-context from a base context and an index, e.g. one context
/// per document of a corpus.
pub fn derive_context(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ 0xD1B5_4A32_D192_ED03) ^ index)
}

/// Identity of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub context: u64,
    pub item: u64,
    pub trial: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, context: u64, item: u64, trial: u64) -> Self {
        Self {
            master_seed,
            context,
            item,
            trial,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut lanes = [0u64; 4];
        let mut acc = splitmix64(self.master_seed);
        for (lane, field) in lanes
            .iter_mut()
            .zip([self.context, self.item, self.trial, 0x5EED])
        {
            acc = splitmix64(acc ^ splitmix64(field.wrapping_add(0x632B_E59B_D9B4_E019)));
            *lane = acc;
        }
        let mut key = [0u8; 32];
        for (chunk, lane) in key.chunks_exact_mut(8).zip(lanes) {
            chunk.copy_from_slice(&lane.to_le_bytes());
        }
        key
    }

    /// Instantiate the generator for this identity.
    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key())
    }
}

/// A stream family fixes `(master_seed, context, trial)` and hands out one
/// stream per item (token position, token id, occurrence index, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamFamily {
    pub master_seed: u64,
    pub context: u64,
    pub trial: u64,
}

impl StreamFamily {
    pub fn new(master_seed: u64, context: u64, trial: u64) -> Self {
        Self {
            master_seed,
            context,
            trial,
        }
    }

    pub fn stream(&self, item: u64) -> RngStream {
        RngStream::new(self.master_seed, self.context, item, self.trial)
    }

    pub fn with_trial(self, trial: u64) -> Self {
        Self { trial, ..self }
    }

    pub fn with_context(self, context: u64) -> Self {
        Self { context, ..self }
    }
}
