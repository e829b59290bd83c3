//! The token-embedding table: vocabulary, row storage, and the metric space
//! every privacy operation acts in.

mod io;
mod search;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_table, write_binary, write_text, TableFormat};
pub use search::{batched_nearest_blocked, BlockSizes, Neighbor};

/// Index of a token in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Which vocabulary entries a nearest-neighbor query may return.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Candidates {
    All,
    #[default]
    RegularOnly,
}

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";

/// `[PAD]`, `[CLS]`, `[SEP]`, `[MASK]`, `[UNK]` and `[unused<digits>]`.
pub fn is_special_token(token: &str) -> bool {
    if matches!(token, PAD | CLS | SEP | MASK | UNK) {
        return true;
    }
    token
        .strip_prefix("[unused")
        .and_then(|rest| rest.strip_suffix(']'))
        .is_some_and(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
}

/// Ordered list of unique token strings.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    special: Vec<bool>,
    regular: Vec<TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), TokenId::from(i)).is_some() {
                return Err(Error::load(
                    format!("token {}", i + 1),
                    format!("duplicate token {tok:?}"),
                ));
            }
        }
        let special: Vec<bool> = tokens.iter().map(|t| is_special_token(t)).collect();
        let regular = special
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| TokenId::from(i))
            .collect();
        Ok(Self {
            tokens,
            index,
            special,
            regular,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special.get(id.index()).copied().unwrap_or(false)
    }

    /// Ids of all non-special tokens, ascending.
    pub fn regular_ids(&self) -> &[TokenId] {
        &self.regular
    }
}

/// Immutable `|V| x n` embedding matrix with its vocabulary and cached
/// squared row norms.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    data: Vec<f32>,
    dim: usize,
    norms: Vec<f64>,
}

impl EmbeddingTable {
    /// Build a table from tokens and row-major data.
    pub fn new(tokens: Vec<String>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::load("header", "dimension must be positive"));
        }
        if data.len() != tokens.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: tokens.len() * dim,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::load(
                format!("row {}", pos / dim + 1),
                "non-finite component",
            ));
        }
        let vocab = Vocabulary::new(tokens)?;
        let norms = data.chunks_exact(dim).map(search::row_sq_norm).collect();
        Ok(Self {
            vocab,
            data,
            dim,
            norms,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Cached squared Euclidean norm of row `id`.
    pub fn sq_norm(&self, id: TokenId) -> f64 {
        self.norms[id.index()]
    }

    pub fn check_id(&self, id: TokenId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                id: id.index(),
                size: self.len(),
            })
        }
    }

    /// The stored row for `id`.
    pub fn lookup(&self, id: TokenId) -> Result<&[f32]> {
        self.check_id(id)?;
        Ok(self.row(id.index()))
    }

    /// The stored row widened to `f64`.
    pub fn lookup_f64(&self, id: TokenId) -> Result<Vec<f64>> {
        Ok(self.lookup(id)?.iter().map(|&x| f64::from(x)).collect())
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn candidate_ids(&self, candidates: Candidates) -> CandidateIter<'_> {
        match candidates {
            Candidates::All => CandidateIter::All(0..self.len() as u32),
            Candidates::RegularOnly => CandidateIter::Listed(self.vocab.regular_ids().iter()),
        }
    }

    pub(crate) fn candidate_count(&self, candidates: Candidates) -> usize {
        match candidates {
            Candidates::All => self.len(),
            Candidates::RegularOnly => self.vocab.regular_ids().len(),
        }
    }

    /// Euclidean distance between two stored rows, by direct subtraction.
    pub fn distance(&self, a: TokenId, b: TokenId) -> Result<f64> {
        let (ra, rb) = (self.lookup(a)?, self.lookup(b)?);
        Ok(ra
            .iter()
            .zip(rb)
            .map(|(&x, &y)| {
                let d = f64::from(x) - f64::from(y);
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) enum CandidateIter<'a> {
    All(std::ops::Range<u32>),
    Listed(std::slice::Iter<'a, TokenId>),
}

impl Iterator for CandidateIter<'_> {
    type Item = TokenId;

    #[inline]
    fn next(&mut self) -> Option<TokenId> {
        match self {
            CandidateIter::All(r) => r.next().map(TokenId),
            CandidateIter::Listed(it) => it.next().copied(),
        }
    }
}
