//! Privacy measurement: embedding geometry, plausible deniability, the
//! nearest-neighbor inversion attack, and per-token perturbation examples.

mod deniability;
mod examples;
mod geometry;
mod inversion;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingTable, TokenId};

pub use deniability::{deniability_stats, DeniabilityReport, TokenDeniability};
pub use examples::{perturbation_examples, EtaExamples, OutputCount, TokenHistogram};
pub use geometry::{geometry_profile, GeometryReport, NoiseNormSource};
pub use inversion::{inversion_attack, InversionReport, TokenRecovery};

/// One bar of a histogram over integer values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub value: u32,
    pub count: u32,
}

pub(crate) fn histogram(values: impl IntoIterator<Item = u32>) -> Vec<HistogramBin> {
    let mut map = std::collections::BTreeMap::new();
    for v in values {
        *map.entry(v).or_insert(0u32) += 1;
    }
    map.into_iter()
        .map(|(value, count)| HistogramBin { value, count })
        .collect()
}

/// Every `stride`-th regular token such that about `count` are selected.
/// Returns all regular tokens when `count` is at least their number.
pub fn stride_sample(table: &EmbeddingTable, count: usize) -> Vec<TokenId> {
    let regular = table.vocab().regular_ids();
    if count == 0 || count >= regular.len() {
        return regular.to_vec();
    }
    let stride = regular.len() / count;
    regular.iter().step_by(stride).take(count).copied().collect()
}

pub(crate) fn token_name(table: &EmbeddingTable, id: TokenId) -> String {
    table.vocab().token(id).unwrap_or_default().to_owned()
}
