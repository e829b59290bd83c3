use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::token_name;
use crate::embedding::{EmbeddingTable, TokenId};
use crate::error::{Error, Result};
use crate::mechanism::{PrivacyParams, Privatizer};
use crate::rng::{context, RngStream, StreamFamily};
use crate::tokenizer::detokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputCount {
    pub id: TokenId,
    pub token: String,
    pub count: u32,
}

/// Output distribution of one input position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenHistogram {
    pub position: usize,
    pub id: TokenId,
    pub token: String,
    pub distinct: u32,
    pub preserved: u32,
    /// Most frequent outputs, by descending count then id.
    pub top: Vec<OutputCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaExamples {
    pub eta: f64,
    pub privatized_ids: Vec<TokenId>,
    pub privatized_text: String,
    pub histograms: Vec<TokenHistogram>,
}

/// For each `eta`, one privatized copy of `seq` plus, per regular position,
/// the output histogram over `trials` draws. Draw `t` of position `i` uses
/// `(seed, EXAMPLES, i, t)`; the privatized copy is draw 0.
pub fn perturbation_examples(
    table: &EmbeddingTable,
    seq: &[TokenId],
    eta_list: &[f64],
    trials: u32,
    top_k: usize,
    master_seed: u64,
) -> Result<Vec<EtaExamples>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    for &id in seq {
        table.check_id(id)?;
    }
    eta_list
        .iter()
        .map(|&eta| {
            let params = PrivacyParams::new(eta, table.dim(), master_seed)?;
            let pr = Privatizer::new(table, params)?;
            let family = StreamFamily::new(master_seed, context::EXAMPLES, 0);
            let privatized_ids = pr.privatize_text(seq, family)?;
            let histograms = seq
                .par_iter()
                .enumerate()
                .filter(|(_, &id)| !table.vocab().is_special(id))
                .map(|(pos, &id)| {
                    let streams = (0..u64::from(trials))
                        .map(|t| RngStream::new(master_seed, context::EXAMPLES, pos as u64, t));
                    let mut outs = pr.privatize_token_many(id, streams)?;
                    let preserved = outs.iter().filter(|&&o| o == id).count() as u32;
                    outs.sort_unstable();
                    let mut counts: Vec<(TokenId, u32)> = Vec::new();
                    for o in outs {
                        match counts.last_mut() {
                            Some((last, c)) if *last == o => *c += 1,
                            _ => counts.push((o, 1)),
                        }
                    }
                    let distinct = counts.len() as u32;
                    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    counts.truncate(top_k);
                    Ok(TokenHistogram {
                        position: pos,
                        id,
                        token: token_name(table, id),
                        distinct,
                        preserved,
                        top: counts
                            .into_iter()
                            .map(|(id, count)| OutputCount {
                                id,
                                token: token_name(table, id),
                                count,
                            })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EtaExamples {
                eta,
                privatized_text: detokenize(&privatized_ids, table)?,
                privatized_ids,
                histograms,
            })
        })
        .collect()
}
