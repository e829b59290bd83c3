use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{histogram, token_name, HistogramBin};
use crate::embedding::TokenId;
use crate::error::{Error, Result};
use crate::mechanism::Privatizer;
use crate::rng::{context, RngStream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDeniability {
    pub id: TokenId,
    pub token: String,
    /// Outputs identical to the input.
    pub n_w: u32,
    /// Distinct outputs.
    pub s_w: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeniabilityReport {
    pub eta: f64,
    pub trials: u32,
    pub tokens: Vec<TokenDeniability>,
    pub n_w_histogram: Vec<HistogramBin>,
    pub s_w_histogram: Vec<HistogramBin>,
    pub mean_n_w: f64,
    pub mean_s_w: f64,
    pub max_n_w: u32,
}

impl DeniabilityReport {
    pub fn get(&self, id: TokenId) -> Option<&TokenDeniability> {
        self.tokens
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tokens[i])
    }
}

/// Run `trials` independent text privatizations of every token in `subset`
/// (all regular tokens when `None`) and count how often the input survives
/// and how many distinct outputs appear.
///
/// Trial `t` of token `w` draws from stream `(seed, DENIABILITY, w, t)`, so
/// results do not depend on subset order or worker count. Tokens are
/// reported in ascending id order.
pub fn deniability_stats(
    privatizer: &Privatizer<'_>,
    trials: u32,
    subset: Option<&[TokenId]>,
) -> Result<DeniabilityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let table = privatizer.table();
    let mut ids: Vec<TokenId> = match subset {
        Some(s) => s.to_vec(),
        None => table.vocab().regular_ids().to_vec(),
    };
    ids.sort_unstable();
    ids.dedup();
    for &id in &ids {
        table.check_id(id)?;
        if table.vocab().is_special(id) {
            return Err(Error::SpecialToken(token_name(table, id)));
        }
    }
    let seed = privatizer.params().master_seed;

    let tokens: Vec<TokenDeniability> = ids
        .par_iter()
        .map(|&id| {
            let streams = (0..u64::from(trials))
                .map(|t| RngStream::new(seed, context::DENIABILITY, u64::from(id.0), t));
            let mut outputs = privatizer.privatize_token_many(id, streams)?;
            let n_w = outputs.iter().filter(|&&o| o == id).count() as u32;
            outputs.sort_unstable();
            outputs.dedup();
            Ok(TokenDeniability {
                id,
                token: token_name(table, id),
                n_w,
                s_w: outputs.len() as u32,
            })
        })
        .collect::<Result<_>>()?;

    let count = tokens.len().max(1) as f64;
    Ok(DeniabilityReport {
        eta: privatizer.params().eta,
        trials,
        n_w_histogram: histogram(tokens.iter().map(|t| t.n_w)),
        s_w_histogram: histogram(tokens.iter().map(|t| t.s_w)),
        mean_n_w: tokens.iter().map(|t| f64::from(t.n_w)).sum::<f64>() / count,
        mean_s_w: tokens.iter().map(|t| f64::from(t.s_w)).sum::<f64>() / count,
        max_n_w: tokens.iter().map(|t| t.n_w).max().unwrap_or(0),
        tokens,
    })
}
