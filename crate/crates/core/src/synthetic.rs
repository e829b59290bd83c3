//! Synthetic embedding tables for tests, benchmarks, and desk-scale
//! experiments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::EmbeddingTable;
use crate::rng::RngStream;

const SYNTH_CONTEXT: u64 = 0x5EED_7AB1E;

/// `tokens` regular tokens named `w0, w1, ...` with i.i.d. `N(0, scale^2)`
/// components.
pub fn gaussian_table(tokens: usize, dim: usize, scale: f64, seed: u64) -> EmbeddingTable {
    let mut rng = RngStream::new(seed, SYNTH_CONTEXT, 0, 0).rng();
    let data = (0..tokens * dim)
        .map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let names = (0..tokens).map(|i| format!("w{i}")).collect();
    EmbeddingTable::new(names, data, dim).expect("synthetic table is well formed")
}

/// One-dimensional table with a regular token at each of `points`.
pub fn line_table(points: &[f32]) -> EmbeddingTable {
    let names = (0..points.len()).map(|i| format!("p{i}")).collect();
    EmbeddingTable::new(names, points.to_vec(), 1).expect("synthetic table is well formed")
}

/// Tokens on the axes of `dim`-space at `+-spacing`, so the minimum
/// nearest-neighbor gap is `spacing * sqrt(2)`. Holds `2 * dim` tokens.
pub fn axis_table(dim: usize, spacing: f32) -> EmbeddingTable {
    let mut data = vec![0.0f32; 2 * dim * dim];
    for axis in 0..dim {
        data[(2 * axis) * dim + axis] = spacing;
        data[(2 * axis + 1) * dim + axis] = -spacing;
    }
    let names = (0..2 * dim).map(|i| format!("a{i}")).collect();
    EmbeddingTable::new(names, data, dim).expect("synthetic table is well formed")
}

/// Prepend the standard special tokens, placed at the origin.
pub fn with_specials(table: &EmbeddingTable) -> EmbeddingTable {
    let specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
    let dim = table.dim();
    let mut tokens: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
    tokens.extend(table.vocab().tokens().iter().cloned());
    let mut data = vec![0.0f32; specials.len() * dim];
    data.extend_from_slice(table.data());
    EmbeddingTable::new(tokens, data, dim).expect("synthetic table is well formed")
}

/// Knobs for [`sentiment_world`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentConfig {
    pub dim: usize,
    pub neutral_words: usize,
    /// Words per polarity.
    pub polar_words: usize,
    /// Per-coordinate standard deviations decay geometrically from
    /// `scale_max` (first coordinate) to `scale_min` (last).
    pub scale_max: f64,
    pub scale_min: f64,
    /// Norm of the shift separating positive from negative words.
    pub polarity_offset: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a sentiment word agrees with the sentence label.
    pub agreement: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            neutral_words: 400,
            polar_words: 40,
            scale_max: 0.1,
            scale_min: 0.001,
            polarity_offset: 0.1,
            min_len: 8,
            max_len: 14,
            agreement: 0.85,
            train_size: 800,
            eval_size: 2000,
            seed: 0,
        }
    }
}

/// A synthetic binary-sentiment task: an anisotropic embedding table with
/// positive (`pos*`), negative (`neg*`) and neutral (`w*`) words, and
/// train/eval splits as `label<TAB>text` lines.
#[derive(Debug, Clone)]
pub struct SentimentWorld {
    pub table: EmbeddingTable,
    pub train_tsv: String,
    pub eval_tsv: String,
}

pub fn sentiment_world(cfg: &SentimentConfig) -> SentimentWorld {
    let dim = cfg.dim;
    let mut rng = RngStream::new(cfg.seed, SYNTH_CONTEXT, 1, 0).rng();
    let ratio = if dim > 1 {
        (cfg.scale_min / cfg.scale_max).powf(1.0 / (dim - 1) as f64)
    } else {
        1.0
    };
    let scales: Vec<f64> = (0..dim).map(|j| cfg.scale_max * ratio.powi(j as i32)).collect();
    let mut direction = vec![0.0; dim];
    crate::mechanism::unit_direction(&mut rng, &mut direction);

    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut data = vec![0.0f32; tokens.len() * dim];
    let mut push = |name: String, shift: f64, rng: &mut rand_chacha::ChaCha20Rng| {
        tokens.push(name);
        for (s, u) in scales.iter().zip(&direction) {
            let g: f64 = rng.sample(StandardNormal);
            data.push((s * g + shift * u) as f32);
        }
    };
    let half = cfg.polarity_offset / 2.0;
    for i in 0..cfg.polar_words {
        push(format!("pos{i}"), half, &mut rng);
    }
    for i in 0..cfg.polar_words {
        push(format!("neg{i}"), -half, &mut rng);
    }
    for i in 0..cfg.neutral_words {
        push(format!("w{i}"), 0.0, &mut rng);
    }
    let table = EmbeddingTable::new(tokens, data, dim).expect("synthetic table is well formed");

    let sentence = |rng: &mut rand_chacha::ChaCha20Rng, label: u8| {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let polar = rng.random_range(1..=3usize).min(len);
        let mut words: Vec<String> = (0..len - polar)
            .map(|_| format!("w{}", rng.random_range(0..cfg.neutral_words)))
            .collect();
        for _ in 0..polar {
            let agree = rng.random::<f64>() < cfg.agreement;
            let positive = (label == 1) == agree;
            let stem = if positive { "pos" } else { "neg" };
            let at = rng.random_range(0..=words.len());
            words.insert(at, format!("{stem}{}", rng.random_range(0..cfg.polar_words)));
        }
        format!("{label}\t{}\n", words.join(" "))
    };
    let split = |n: usize, rng: &mut rand_chacha::ChaCha20Rng| {
        (0..n).map(|i| sentence(rng, (i % 2) as u8)).collect::<String>()
    };
    let train_tsv = split(cfg.train_size, &mut rng);
    let eval_tsv = split(cfg.eval_size, &mut rng);
    SentimentWorld {
        table,
        train_tsv,
        eval_tsv,
    }
}
