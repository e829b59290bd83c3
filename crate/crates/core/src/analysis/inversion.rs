use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::token_name;
use crate::embedding::TokenId;
use crate::error::{Error, Result};
use crate::mechanism::Privatizer;
use crate::rng::{context, RngStream};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecovery {
    pub id: TokenId,
    pub token: String,
    pub occurrences: u64,
    pub recovered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub eta: f64,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub per_token: Vec<TokenRecovery>,
}

/// Perturb every regular token occurrence of `corpus` once and try to
/// recover it as the nearest candidate of the perturbed embedding.
///
/// Occurrences are counted, not types. The `g`-th regular occurrence in
/// corpus order draws from `(seed, INVERSION, g, 0)`.
pub fn inversion_attack(
    privatizer: &Privatizer<'_>,
    corpus: &[Vec<TokenId>],
) -> Result<InversionReport> {
    let table = privatizer.table();
    let vocab = table.vocab();
    let mut occurrences = Vec::new();
    for seq in corpus {
        for &id in seq {
            table.check_id(id)?;
            if !vocab.is_special(id) {
                occurrences.push(id);
            }
        }
    }
    if occurrences.is_empty() {
        return Err(Error::EmptyInput("corpus has no regular tokens"));
    }
    let seed = privatizer.params().master_seed;
    let dim = table.dim();

    let hits: Vec<bool> = occurrences
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut queries = vec![0.0; chunk.len() * dim];
            for (j, (&id, q)) in chunk.iter().zip(queries.chunks_exact_mut(dim)).enumerate() {
                let g = (c * CHUNK + j) as u64;
                privatizer.perturb_token_into(id, RngStream::new(seed, context::INVERSION, g, 0), q)?;
            }
            let found = table.batched_nearest(&queries, privatizer.candidates())?;
            Ok(chunk.iter().zip(found).map(|(a, b)| *a == b).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut per = std::collections::BTreeMap::<TokenId, (u64, u64)>::new();
    for (&id, &hit) in occurrences.iter().zip(&hits) {
        let e = per.entry(id).or_default();
        e.0 += 1;
        e.1 += u64::from(hit);
    }
    let total = occurrences.len() as u64;
    let correct = hits.iter().filter(|&&h| h).count() as u64;
    Ok(InversionReport {
        eta: privatizer.params().eta,
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        per_token: per
            .into_iter()
            .map(|(id, (occurrences, recovered))| TokenRecovery {
                id,
                token: token_name(table, id),
                occurrences,
                recovered,
            })
            .collect(),
    })
}
