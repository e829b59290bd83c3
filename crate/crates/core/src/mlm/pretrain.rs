use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PerturbationSet;
use crate::embedding::{TokenId, MASK};
use crate::error::{Error, Result};
use crate::mechanism::{Mode, Privatizer};
use crate::rng::{context, derive_context, RngStream, StreamFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub mask_rate: f64,
    /// Upper bound on masked positions per sequence; `None` for no cap.
    pub max_predictions: Option<usize>,
    /// Privatized draws per masked position for the prob target.
    pub prob_draws: u32,
    /// How unmasked context tokens are privatized.
    pub mode: Mode,
    /// Generation trial. Changing it redraws every perturbation but keeps
    /// the mask positions.
    pub trial: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            max_predictions: Some(20),
            prob_draws: 10,
            mode: Mode::Text,
            trial: 0,
        }
    }
}

/// One privatized, masked training sequence with its three kinds of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub input_ids: Vec<TokenId>,
    pub masked_positions: Vec<usize>,
    pub original_targets: Vec<TokenId>,
    pub vanilla_targets: Vec<TokenId>,
    pub prob_targets: Vec<PerturbationSet>,
    /// In representation mode `input_ids` carry the original context tokens;
    /// the consumer perturbs position `i` with `context_noise.stream(i)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_noise: Option<StreamFamily>,
}

fn select_masks(
    candidates: &[usize],
    rate: f64,
    cap: Option<usize>,
    stream: RngStream,
) -> Vec<usize> {
    let mut rng = stream.rng();
    let mut chosen: Vec<(u64, usize)> = Vec::new();
    for &pos in candidates {
        let u: f64 = rng.random();
        let priority: u64 = rng.random();
        if u < rate {
            chosen.push((priority, pos));
        }
    }
    if let Some(cap) = cap {
        if chosen.len() > cap {
            chosen.sort_unstable();
            chosen.truncate(cap);
        }
    }
    let mut positions: Vec<usize> = chosen.into_iter().map(|(_, p)| p).collect();
    positions.sort_unstable();
    positions
}

/// Build masked, privatized examples for every sequence of `corpus`.
///
/// Regular tokens are masked independently with probability `mask_rate`
/// (special tokens never are), keeping at most `max_predictions` chosen by
/// random priority. Each masked position gets its original token, one
/// privatized draw (the vanilla target, which is also the first draw of the
/// prob set) and `prob_draws` privatized draws. Unmasked regular tokens are
/// privatized once in text mode, or left for the consumer to perturb in
/// representation mode.
///
/// Stream layout for sequence `d`: mask selection uses
/// `(seed, MASK_SELECT, d, 0)` and ignores the trial; context uses family
/// `(seed, derive(PRETRAIN_CONTEXT, d), trial)`; draw `j` of masked
/// position `i` uses `(seed, derive(derive(MASK_TARGET, d), trial), i, j)`.
///
/// The encoder consuming these examples sits on the user side of the
/// privacy boundary; gradients must not flow back into it from the service
/// side. That is the trainer's job and nothing here enforces it.
pub fn generate_pretraining_examples(
    corpus: &[Vec<TokenId>],
    privatizer: &Privatizer<'_>,
    config: &PretrainConfig,
) -> Result<Vec<MaskedExample>> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    if !(0.0..=1.0).contains(&config.mask_rate) {
        return Err(Error::InvalidParameter(format!(
            "mask rate {} outside [0, 1]",
            config.mask_rate
        )));
    }
    if config.prob_draws == 0 {
        return Err(Error::InvalidParameter("prob_draws must be at least 1".into()));
    }
    let table = privatizer.table();
    let mask_id = table.vocab().id(MASK).ok_or(Error::MissingSpecialToken(MASK))?;
    let seed = privatizer.params().master_seed;

    corpus
        .par_iter()
        .enumerate()
        .map(|(d, seq)| {
            for &id in seq {
                table.check_id(id)?;
            }
            let d = d as u64;
            let regular: Vec<usize> = seq
                .iter()
                .enumerate()
                .filter(|(_, &id)| !table.vocab().is_special(id))
                .map(|(i, _)| i)
                .collect();
            let masked_positions = select_masks(
                &regular,
                config.mask_rate,
                config.max_predictions,
                RngStream::new(seed, context::MASK_SELECT, d, 0),
            );

            let context_family = StreamFamily::new(
                seed,
                derive_context(context::PRETRAIN_CONTEXT, d),
                config.trial,
            );
            let (mut input_ids, context_noise) = match config.mode {
                Mode::Text => (privatizer.privatize_text(seq, context_family)?, None),
                Mode::Representation => (seq.clone(), Some(context_family)),
            };

            let target_ctx = derive_context(derive_context(context::MASK_TARGET, d), config.trial);
            let mut original_targets = Vec::with_capacity(masked_positions.len());
            let mut vanilla_targets = Vec::with_capacity(masked_positions.len());
            let mut prob_targets = Vec::with_capacity(masked_positions.len());
            for &pos in &masked_positions {
                let original = seq[pos];
                let draws = privatizer.privatize_token_many(
                    original,
                    (0..u64::from(config.prob_draws))
                        .map(|j| RngStream::new(seed, target_ctx, pos as u64, j)),
                )?;
                original_targets.push(original);
                vanilla_targets.push(draws[0]);
                prob_targets.push(draws.into_iter().collect());
                input_ids[pos] = mask_id;
            }

            Ok(MaskedExample {
                input_ids,
                masked_positions,
                original_targets,
                vanilla_targets,
                prob_targets,
                context_noise,
            })
        })
        .collect()
}
