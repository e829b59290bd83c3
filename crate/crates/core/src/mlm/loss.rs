use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::TokenId;
use crate::error::{Error, Result};

/// Multiset of privatized outputs for one masked position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationSet {
    counts: BTreeMap<TokenId, u32>,
    total: u32,
}

impl PerturbationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: TokenId) {
        *self.counts.entry(id).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, id: TokenId) -> u32 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(id, count)` pairs in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, u32)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }
}

impl FromIterator<TokenId> for PerturbationSet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        let mut set = Self::new();
        iter.into_iter().for_each(|id| set.add(id));
        set
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    id: TokenId,
    count: u32,
}

impl Serialize for PerturbationSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|(id, count)| Entry { id, count }))
    }
}

impl<'de> Deserialize<'de> for PerturbationSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        let mut set = Self::new();
        for e in entries {
            if e.count == 0 {
                return Err(serde::de::Error::custom("perturbation count must be positive"));
            }
            *set.counts.entry(e.id).or_insert(0) += e.count;
            set.total += e.count;
        }
        Ok(set)
    }
}

fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("logits must be finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln())
}

fn target_logit(logits: &[f64], target: TokenId) -> Result<f64> {
    logits
        .get(target.index())
        .copied()
        .ok_or(Error::TokenOutOfRange {
            id: target.index(),
            size: logits.len(),
        })
}

/// Cross-entropy against the privatized token.
pub fn vanilla_mlm_loss(logits: &[f64], target: TokenId) -> Result<f64> {
    let t = target_logit(logits, target)?;
    Ok(log_sum_exp(logits)? - t)
}

/// Cross-entropy against the empirical distribution of `pset`.
pub fn prob_mlm_loss(logits: &[f64], pset: &PerturbationSet) -> Result<f64> {
    if pset.is_empty() {
        return Err(Error::EmptyInput("perturbation set"));
    }
    let lse = log_sum_exp(logits)?;
    let total = f64::from(pset.total());
    pset.iter().try_fold(0.0, |acc, (id, count)| {
        Ok(acc + f64::from(count) / total * (lse - target_logit(logits, id)?))
    })
}

/// Cross-entropy against the original token.
pub fn denoising_mlm_loss(logits: &[f64], original: TokenId) -> Result<f64> {
    vanilla_mlm_loss(logits, original)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let logits = vec![0.25; 100];
        let ln100 = 100f64.ln();
        assert!((vanilla_mlm_loss(&logits, TokenId(7)).unwrap() - ln100).abs() < 1e-6);
        assert!((denoising_mlm_loss(&logits, TokenId(0)).unwrap() - ln100).abs() < 1e-6);
        let pset: PerturbationSet = [TokenId(1), TokenId(1), TokenId(50)].into_iter().collect();
        assert!((prob_mlm_loss(&logits, &pset).unwrap() - ln100).abs() < 1e-6);
    }

    #[test]
    fn small_logit_cases() {
        // ln(e + e^2 + e^3) = 3.40760596...
        let logits = [1.0, 2.0, 3.0];
        assert!((vanilla_mlm_loss(&logits, TokenId(2)).unwrap() - 0.40761).abs() < 1e-5);
        assert!((denoising_mlm_loss(&logits, TokenId(0)).unwrap() - 2.40761).abs() < 1e-5);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let mut logits = vec![-1000.0; 10];
        logits[3] = 1000.0;
        let l = vanilla_mlm_loss(&logits, TokenId(3)).unwrap();
        assert!(l.is_finite() && (0.0..1e-12).contains(&l));
        let far = vanilla_mlm_loss(&logits, TokenId(4)).unwrap();
        assert!((far - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_pair_sets() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let single: PerturbationSet = std::iter::repeat_n(TokenId(1), 7).collect();
        assert!(
            (prob_mlm_loss(&logits, &single).unwrap() - vanilla_mlm_loss(&logits, TokenId(1)).unwrap())
                .abs()
                < 1e-12
        );
        let pair: PerturbationSet = [TokenId(0), TokenId(2)].into_iter().collect();
        let mean = 0.5
            * (vanilla_mlm_loss(&logits, TokenId(0)).unwrap()
                + vanilla_mlm_loss(&logits, TokenId(2)).unwrap());
        assert!((prob_mlm_loss(&logits, &pair).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(vanilla_mlm_loss(&[1.0, 2.0], TokenId(2)).is_err());
        assert!(vanilla_mlm_loss(&[], TokenId(0)).is_err());
        assert!(vanilla_mlm_loss(&[f64::NAN], TokenId(0)).is_err());
        assert!(prob_mlm_loss(&[1.0], &PerturbationSet::new()).is_err());
        let bad: PerturbationSet = [TokenId(5)].into_iter().collect();
        assert!(prob_mlm_loss(&[1.0], &bad).is_err());
    }

    #[test]
    fn serde_shape() {
        let set: PerturbationSet = [TokenId(4), TokenId(2), TokenId(4)].into_iter().collect();
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"[{"id":2,"count":1},{"id":4,"count":2}]"#);
        let back: PerturbationSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        assert!(serde_json::from_str::<PerturbationSet>(r#"[{"id":1,"count":0}]"#).is_err());
    }

    fn logits_and_set() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        (2usize..40).prop_flat_map(|v| {
            (
                prop::collection::vec(-20.0f64..20.0, v),
                prop::collection::vec(0..v, 1..30),
            )
        })
    }

    proptest! {
        #[test]
        fn prob_is_weighted_mean((logits, draws) in logits_and_set()) {
            let set: PerturbationSet = draws.iter().map(|&i| TokenId::from(i)).collect();
            let direct: f64 = draws
                .iter()
                .map(|&i| vanilla_mlm_loss(&logits, TokenId::from(i)).unwrap())
                .sum::<f64>()
                / draws.len() as f64;
            prop_assert!((prob_mlm_loss(&logits, &set).unwrap() - direct).abs() < 1e-9);
        }

        #[test]
        fn shift_invariance((logits, draws) in logits_and_set(), shift in -500.0f64..500.0) {
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let set: PerturbationSet = draws.iter().map(|&i| TokenId::from(i)).collect();
            let t = TokenId::from(draws[0]);
            prop_assert!((vanilla_mlm_loss(&logits, t).unwrap() - vanilla_mlm_loss(&shifted, t).unwrap()).abs() < 1e-9);
            prop_assert!((denoising_mlm_loss(&logits, t).unwrap() - denoising_mlm_loss(&shifted, t).unwrap()).abs() < 1e-9);
            prop_assert!((prob_mlm_loss(&logits, &set).unwrap() - prob_mlm_loss(&shifted, &set).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn losses_nonnegative((logits, draws) in logits_and_set()) {
            prop_assert!(vanilla_mlm_loss(&logits, TokenId::from(draws[0])).unwrap() >= 0.0);
        }
    }
}
