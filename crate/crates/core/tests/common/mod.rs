#![allow(dead_code)]

use dchi::{EmbeddingTable, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-form Laplace(1) tail mass beyond 0.5: the flip probability of the
/// two-token line table at distance 1 with eta = 1.
pub fn laplace_flip() -> f64 {
    0.5 * (-0.5f64).exp()
}

/// Corpus of `docs` sequences whose tokens follow a Zipf(1) law over the
/// regular tokens of `table`.
pub fn zipf_corpus(table: &EmbeddingTable, docs: usize, len: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let ids = table.vocab().regular_ids();
    let weights: Vec<f64> = (1..=ids.len()).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|_| {
            (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    let k = cdf.partition_point(|&c| c < u).min(ids.len() - 1);
                    ids[k]
                })
                .collect()
        })
        .collect()
}

/// Print one result line and fail the test when `ok` is false.
pub fn verdict(name: &str, ok: bool, detail: impl AsRef<str>) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {}", detail.as_ref());
    assert!(ok, "{name} failed: {}", detail.as_ref());
}
