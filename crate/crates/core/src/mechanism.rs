//! The dχ-privacy randomizers.
//!
//! `perturb_embedding` adds noise with density proportional to
//! `exp(-eta * |N|)`: a radius drawn from `Gamma(n, 1/eta)` times a direction
//! drawn uniformly from the unit sphere. `privatize_token` maps the
//! perturbed vector back to the nearest vocabulary token.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{Candidates, EmbeddingTable, TokenId};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamFamily};
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub eta: f64,
    pub dim: usize,
    pub master_seed: u64,
}

impl PrivacyParams {
    pub fn new(eta: f64, dim: usize, master_seed: u64) -> Result<Self> {
        let p = Self {
            eta,
            dim,
            master_seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be a positive finite number, got {}",
                self.eta
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(())
    }

    /// Expected noise norm, `n / eta`.
    pub fn mean_noise_norm(&self) -> f64 {
        self.dim as f64 / self.eta
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(eta, self.dim, self.master_seed)
    }
}

/// One noise draw and its Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub vector: Vec<f64>,
    pub radius: f64,
}

/// Fill `out` with a uniformly distributed unit vector.
pub(crate) fn unit_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut sq = 0.0;
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
            sq += *x * *x;
        }
        if sq > 0.0 {
            let inv = 1.0 / sq.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// Draw noise into `out` and return its radius.
pub(crate) fn fill_noise(params: &PrivacyParams, stream: RngStream, out: &mut [f64]) -> Result<f64> {
    params.validate()?;
    debug_assert_eq!(out.len(), params.dim);
    let gamma = Gamma::new(params.dim as f64, 1.0 / params.eta)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream.rng();
    unit_direction(&mut rng, out);
    let radius = gamma.sample(&mut rng);
    out.iter_mut().for_each(|x| *x *= radius);
    Ok(radius)
}

pub fn sample_noise(params: &PrivacyParams, stream: RngStream) -> Result<NoiseSample> {
    let mut vector = vec![0.0; params.dim];
    let radius = fill_noise(params, stream, &mut vector)?;
    Ok(NoiseSample { vector, radius })
}

/// `x + N`.
pub fn perturb_embedding(x: &[f64], params: &PrivacyParams, stream: RngStream) -> Result<Vec<f64>> {
    if x.len() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: x.len(),
        });
    }
    let mut out = vec![0.0; params.dim];
    fill_noise(params, stream, &mut out)?;
    out.iter_mut().zip(x).for_each(|(o, &xi)| *o += xi);
    Ok(out)
}

/// How a sequence is privatized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Perturbed embeddings are released.
    Representation,
    /// Perturbed embeddings are mapped back to tokens.
    Text,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "representation" | "rep" => Ok(Mode::Representation),
            "text" | "txt" => Ok(Mode::Text),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrivatizedSequence {
    Representation(Vec<Vec<f64>>),
    Text(TokenSequence),
}

/// Token privatizer bound to a table and a parameter set.
#[derive(Debug, Clone, Copy)]
pub struct Privatizer<'a> {
    table: &'a EmbeddingTable,
    params: PrivacyParams,
    candidates: Candidates,
}

impl<'a> Privatizer<'a> {
    pub fn new(table: &'a EmbeddingTable, params: PrivacyParams) -> Result<Self> {
        params.validate()?;
        if params.dim != table.dim() {
            return Err(Error::DimensionMismatch {
                expected: table.dim(),
                actual: params.dim,
            });
        }
        Ok(Self {
            table,
            params,
            candidates: Candidates::RegularOnly,
        })
    }

    /// Override the output candidate set (regular tokens by default).
    pub fn with_candidates(mut self, candidates: Candidates) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn table(&self) -> &'a EmbeddingTable {
        self.table
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn candidates(&self) -> Candidates {
        self.candidates
    }

    fn check_regular(&self, id: TokenId) -> Result<()> {
        self.table.check_id(id)?;
        if self.table.vocab().is_special(id) {
            let tok = self.table.vocab().token(id).unwrap_or_default();
            return Err(Error::SpecialToken(tok.to_owned()));
        }
        Ok(())
    }

    /// `phi(id) + N`.
    pub fn perturb_token(&self, id: TokenId, stream: RngStream) -> Result<Vec<f64>> {
        self.check_regular(id)?;
        perturb_embedding(&self.table.lookup_f64(id)?, &self.params, stream)
    }

    /// Write `phi(id) + N` into `out`.
    pub(crate) fn perturb_token_into(&self, id: TokenId, stream: RngStream, out: &mut [f64]) -> Result<()> {
        fill_noise(&self.params, stream, out)?;
        for (o, &x) in out.iter_mut().zip(self.table.lookup(id)?) {
            *o += f64::from(x);
        }
        Ok(())
    }

    /// Nearest candidate to `phi(id) + N`: one noise draw, one search.
    pub fn privatize_token(&self, id: TokenId, stream: RngStream) -> Result<TokenId> {
        let noisy = self.perturb_token(id, stream)?;
        self.table.nearest_token(&noisy, self.candidates)
    }

    /// Privatize `id` once per stream, sharing a single batched search.
    pub fn privatize_token_many(
        &self,
        id: TokenId,
        streams: impl IntoIterator<Item = RngStream>,
    ) -> Result<Vec<TokenId>> {
        self.check_regular(id)?;
        let streams: Vec<RngStream> = streams.into_iter().collect();
        let dim = self.table.dim();
        let mut queries = vec![0.0; streams.len() * dim];
        for (chunk, stream) in queries.chunks_exact_mut(dim).zip(streams) {
            self.perturb_token_into(id, stream, chunk)?;
        }
        self.table.batched_nearest(&queries, self.candidates)
    }

    /// Privatize every regular token of `seq` independently; token `i`
    /// draws from `family.stream(i)`. Special tokens pass through.
    pub fn privatize_sequence(
        &self,
        seq: &[TokenId],
        mode: Mode,
        family: StreamFamily,
    ) -> Result<PrivatizedSequence> {
        let dim = self.table.dim();
        let mut vectors = Vec::with_capacity(seq.len());
        for (pos, &id) in seq.iter().enumerate() {
            self.table.check_id(id)?;
            let mut v = self.table.lookup_f64(id)?;
            if !self.table.vocab().is_special(id) {
                let mut noise = vec![0.0; dim];
                fill_noise(&self.params, family.stream(pos as u64), &mut noise)?;
                v.iter_mut().zip(&noise).for_each(|(a, b)| *a += b);
            }
            vectors.push(v);
        }
        match mode {
            Mode::Representation => Ok(PrivatizedSequence::Representation(vectors)),
            Mode::Text => {
                let noisy: Vec<usize> = seq
                    .iter()
                    .enumerate()
                    .filter(|(_, id)| !self.table.vocab().is_special(**id))
                    .map(|(i, _)| i)
                    .collect();
                let mut queries = Vec::with_capacity(noisy.len() * dim);
                for &i in &noisy {
                    queries.extend_from_slice(&vectors[i]);
                }
                let found = self.table.batched_nearest(&queries, self.candidates)?;
                let mut out = seq.to_vec();
                for (i, id) in noisy.into_iter().zip(found) {
                    out[i] = id;
                }
                Ok(PrivatizedSequence::Text(out))
            }
        }
    }

    /// Text-mode convenience wrapper around [`Self::privatize_sequence`].
    pub fn privatize_text(&self, seq: &[TokenId], family: StreamFamily) -> Result<TokenSequence> {
        match self.privatize_sequence(seq, Mode::Text, family)? {
            PrivatizedSequence::Text(ids) => Ok(ids),
            PrivatizedSequence::Representation(_) => unreachable!(),
        }
    }
}

/// Sum of per-position embedding distances.
pub fn sequence_distance(a: &[TokenId], b: &[TokenId], table: &EmbeddingTable) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| table.distance(x, y))
        .sum()
}
