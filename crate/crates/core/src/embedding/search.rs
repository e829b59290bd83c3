//! Exact nearest-neighbor search.
//!
//! All squared distances are evaluated as `|q|^2 - 2 q.y + |y|^2` in `f64`
//! with the row norms cached at load. The single-query and batched paths
//! share the same per-pair kernel and scan candidates in ascending id order
//! with a strict `<`, so they agree bit for bit and ties go to the lowest id.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Candidates, EmbeddingTable, TokenId};
use crate::error::{Error, Result};

#[inline]
pub(crate) fn row_sq_norm(row: &[f32]) -> f64 {
    row.iter().map(|&x| f64::from(x) * f64::from(x)).sum()
}

#[inline]
fn dot(query: &[f64], row: &[f32]) -> f64 {
    query.iter().zip(row).map(|(&q, &r)| q * f64::from(r)).sum()
}

#[inline]
fn query_sq_norm(query: &[f64]) -> f64 {
    query.iter().map(|&q| q * q).sum()
}

#[inline]
fn sq_dist(query_norm: f64, dot: f64, row_norm: f64) -> f64 {
    query_norm - 2.0 * dot + row_norm
}

/// A neighbor with its Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: TokenId,
    pub distance: f64,
}

/// Tile sizes for the blocked search: queries per tile and candidate rows
/// per tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSizes {
    pub queries: usize,
    pub rows: usize,
}

impl Default for BlockSizes {
    fn default() -> Self {
        Self {
            queries: 32,
            rows: 64,
        }
    }
}

impl EmbeddingTable {
    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("query has non-finite components".into()));
        }
        Ok(())
    }

    /// The candidate token closest to `query` in Euclidean distance.
    pub fn nearest_token(&self, query: &[f64], candidates: Candidates) -> Result<TokenId> {
        self.check_query(query)?;
        if self.candidate_count(candidates) == 0 {
            return Err(Error::EmptyCandidates);
        }
        Ok(self.nearest_unchecked(query, candidates))
    }

    pub(crate) fn nearest_unchecked(&self, query: &[f64], candidates: Candidates) -> TokenId {
        let qn = query_sq_norm(query);
        let mut best = (f64::INFINITY, TokenId(u32::MAX));
        for id in self.candidate_ids(candidates) {
            let d = sq_dist(qn, dot(query, self.row(id.index())), self.norms[id.index()]);
            if d < best.0 {
                best = (d, id);
            }
        }
        best.1
    }

    /// Nearest candidate for every row of the row-major `queries` matrix.
    pub fn batched_nearest(&self, queries: &[f64], candidates: Candidates) -> Result<Vec<TokenId>> {
        batched_nearest_blocked(self, queries, candidates, BlockSizes::default())
    }

    /// The `k` nearest other tokens of `id` over the whole vocabulary.
    pub fn knn(&self, id: TokenId, k: usize) -> Result<Vec<Neighbor>> {
        self.knn_among(id, k, Candidates::All)
    }

    /// The `k` nearest tokens of `id` within `candidates`, excluding `id`
    /// itself, in ascending distance (ties by id).
    pub fn knn_among(&self, id: TokenId, k: usize, candidates: Candidates) -> Result<Vec<Neighbor>> {
        self.check_id(id)?;
        let pool = self.candidate_count(candidates)
            - usize::from(candidates == Candidates::All || !self.vocab.is_special(id));
        if k == 0 || k > pool {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={pool}"
            )));
        }
        let query = self.lookup_f64(id)?;
        let qn = self.norms[id.index()];
        let mut all: Vec<(f64, TokenId)> = self
            .candidate_ids(candidates)
            .filter(|&c| c != id)
            .map(|c| {
                let d = sq_dist(qn, dot(&query, self.row(c.index())), self.norms[c.index()]);
                (d, c)
            })
            .collect();
        let by_dist = |a: &(f64, TokenId), b: &(f64, TokenId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_dist);
            all.truncate(k);
        }
        all.sort_unstable_by(by_dist);
        Ok(all
            .into_iter()
            .map(|(d, c)| Neighbor {
                id: c,
                distance: d.max(0.0).sqrt(),
            })
            .collect())
    }
}

/// Blocked, parallel nearest-neighbor search over tiles of queries and
/// candidate rows. Results do not depend on the tile sizes or thread count.
pub fn batched_nearest_blocked(
    table: &EmbeddingTable,
    queries: &[f64],
    candidates: Candidates,
    blocks: BlockSizes,
) -> Result<Vec<TokenId>> {
    let dim = table.dim;
    if !queries.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: queries.len() % dim,
        });
    }
    if queries.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("query has non-finite components".into()));
    }
    let n_queries = queries.len() / dim;
    if n_queries == 0 {
        return Ok(Vec::new());
    }
    if table.candidate_count(candidates) == 0 {
        return Err(Error::EmptyCandidates);
    }
    let ids: Vec<TokenId> = table.candidate_ids(candidates).collect();
    let qb = blocks.queries.max(1);
    let rb = blocks.rows.max(1);

    let mut out = vec![TokenId(u32::MAX); n_queries];
    out.par_chunks_mut(qb)
        .zip(queries.par_chunks(qb * dim))
        .for_each(|(out_tile, q_tile)| {
            let norms: Vec<f64> = q_tile.chunks_exact(dim).map(query_sq_norm).collect();
            let mut best = vec![f64::INFINITY; norms.len()];
            for row_tile in ids.chunks(rb) {
                for (qi, q) in q_tile.chunks_exact(dim).enumerate() {
                    let (mut bd, mut bid) = (best[qi], out_tile[qi]);
                    for &id in row_tile {
                        let d = sq_dist(norms[qi], dot(q, table.row(id.index())), table.norms[id.index()]);
                        if d < bd {
                            bd = d;
                            bid = id;
                        }
                    }
                    best[qi] = bd;
                    out_tile[qi] = bid;
                }
            }
        });
    Ok(out)
}
