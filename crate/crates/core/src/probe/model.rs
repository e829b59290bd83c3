use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::embedding::{EmbeddingTable, TokenId};
use crate::error::{Error, Result};
use crate::mechanism::{Mode, PrivacyParams, PrivatizedSequence, Privatizer};
use crate::rng::{context, derive_context, RngStream, StreamFamily};

/// How probe input is privatized before featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privatization {
    None,
    Representation,
    Text,
}

impl std::str::FromStr for Privatization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Privatization::None),
            other => other.parse::<Mode>().map(Into::into),
        }
    }
}

impl From<Mode> for Privatization {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Representation => Privatization::Representation,
            Mode::Text => Privatization::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub l2: f64,
    /// Standardize features with statistics of the first epoch's training
    /// features.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 32,
            l2: 0.0,
            standardize: true,
            seed: 0,
        }
    }
}

/// Logistic regression over averaged token embeddings (concatenated for
/// sentence pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-feature `(mean, std)` applied before the linear layer; empty for
    /// raw features.
    #[serde(default)]
    pub scaling: Vec<(f64, f64)>,
    pub config: ProbeConfig,
    /// Accuracy on the final epoch's training features.
    pub train_accuracy: f64,
}

impl ProbeModel {
    /// Untrained model with standard-normal weights.
    pub fn random(feature_dim: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, context::PROBE_INIT, 0, 0).rng();
        Self {
            weights: (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            bias: 0.0,
            scaling: Vec::new(),
            config: ProbeConfig { seed, ..Default::default() },
            train_accuracy: f64::NAN,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &[f64]) -> f64 {
        let dot: f64 = if self.scaling.is_empty() {
            self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
        } else {
            self.weights
                .iter()
                .zip(x)
                .zip(&self.scaling)
                .map(|((w, v), (m, s))| w * (v - m) / s)
                .sum()
        };
        self.bias + dot
    }

    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.score(x) > 0.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn mean_embedding(
    seq: &[TokenId],
    table: &EmbeddingTable,
    privatizer: Option<&Privatizer<'_>>,
    privatization: Privatization,
    family: StreamFamily,
    out: &mut [f64],
) -> Result<()> {
    let dim = table.dim();
    let mut add = |v: &[f64]| out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
    match (privatization, privatizer) {
        (Privatization::None, _) | (_, None) => {
            for &id in seq {
                add(&table.lookup_f64(id)?);
            }
        }
        (Privatization::Representation, Some(p)) => {
            match p.privatize_sequence(seq, Mode::Representation, family)? {
                PrivatizedSequence::Representation(vs) => vs.iter().for_each(|v| add(v)),
                PrivatizedSequence::Text(_) => unreachable!(),
            }
        }
        (Privatization::Text, Some(p)) => {
            for id in p.privatize_text(seq, family)? {
                add(&table.lookup_f64(id)?);
            }
        }
    }
    let n = seq.len().max(1) as f64;
    out[..dim].iter_mut().for_each(|o| *o /= n);
    Ok(())
}

fn featurize(
    data: &LabeledDataset,
    table: &EmbeddingTable,
    privatizer: Option<&Privatizer<'_>>,
    privatization: Privatization,
    base_context: u64,
    trial: u64,
) -> Result<Vec<Vec<f64>>> {
    let dim = table.dim();
    let width = if data.is_pair() { 2 * dim } else { dim };
    let seed = privatizer.map_or(0, |p| p.params().master_seed);
    data.examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut x = vec![0.0; width];
            for (part, seq) in std::iter::once(&ex.first).chain(ex.second.as_ref()).enumerate() {
                let family = StreamFamily::new(
                    seed,
                    derive_context(base_context, (2 * i + part) as u64),
                    trial,
                );
                mean_embedding(
                    seq,
                    table,
                    privatizer,
                    privatization,
                    family,
                    &mut x[part * dim..(part + 1) * dim],
                )?;
            }
            Ok(x)
        })
        .collect()
}

fn feature_scaling(features: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let width = features.first().map_or(0, Vec::len);
    let n = features.len() as f64;
    (0..width)
        .map(|j| {
            let mean = features.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = features.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            (mean, if std > 1e-12 { std } else { 1.0 })
        })
        .collect()
}

fn privatizer_for<'a>(
    table: &'a EmbeddingTable,
    privatization: Privatization,
    params: &PrivacyParams,
) -> Result<Option<Privatizer<'a>>> {
    match privatization {
        Privatization::None => Ok(None),
        _ => Privatizer::new(table, *params).map(Some),
    }
}

/// Train a logistic probe with mini-batch gradient descent. Under
/// privatization the training input is re-privatized every epoch, using the
/// epoch number as the trial index.
pub fn train_probe(
    data: &LabeledDataset,
    table: &EmbeddingTable,
    privatization: Privatization,
    params: &PrivacyParams,
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    data.validate(table)?;
    let positives = data.labels().filter(|&y| y == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::InvalidParameter("training data has a single class".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 || !config.learning_rate.is_finite() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidParameter(
            "epochs, batch size and learning rate must be positive".into(),
        ));
    }
    let privatizer = privatizer_for(table, privatization, params)?;
    let width = if data.is_pair() { 2 * table.dim() } else { table.dim() };
    let mut model = ProbeModel {
        weights: vec![0.0; width],
        bias: 0.0,
        scaling: Vec::new(),
        config: *config,
        train_accuracy: 0.0,
    };
    let labels: Vec<f64> = data.labels().map(f64::from).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut features = Vec::new();
    let mut grad = vec![0.0; width];

    for epoch in 0..config.epochs {
        if epoch == 0 || privatization != Privatization::None {
            features = featurize(
                data,
                table,
                privatizer.as_ref(),
                privatization,
                context::PROBE_TRAIN,
                u64::from(epoch),
            )?;
            if epoch == 0 && config.standardize {
                model.scaling = feature_scaling(&features);
            }
            if !model.scaling.is_empty() {
                for x in &mut features {
                    for (v, (m, s)) in x.iter_mut().zip(&model.scaling) {
                        *v = (*v - m) / s;
                    }
                }
            }
        }
        let mut rng = RngStream::new(config.seed, context::PROBE_INIT, 1, u64::from(epoch)).rng();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_bias = 0.0;
            for &i in batch {
                let z = model.bias
                    + model.weights.iter().zip(&features[i]).map(|(w, x)| w * x).sum::<f64>();
                let err = sigmoid(z) - labels[i];
                grad.iter_mut().zip(&features[i]).for_each(|(g, x)| *g += err * x);
                grad_bias += err;
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= scale * g + config.learning_rate * config.l2 * *w;
            }
            model.bias -= scale * grad_bias;
        }
    }
    let correct = features
        .iter()
        .zip(&labels)
        .filter(|(x, &y)| {
            let z = model.bias + model.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>();
            (z > 0.0) == (y == 1.0)
        })
        .count();
    model.train_accuracy = correct as f64 / features.len() as f64;
    Ok(model)
}

/// Accuracy of `model` on `data`, privatized with `params` when requested.
pub fn eval_probe(
    model: &ProbeModel,
    data: &LabeledDataset,
    table: &EmbeddingTable,
    privatization: Privatization,
    params: &PrivacyParams,
) -> Result<f64> {
    let hits = eval_probe_correct(model, data, table, privatization, params)?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Per-example correctness of `model` on `data`. Evaluation privatization
/// depends only on `params` and the example index, so two models scored with
/// the same `params` see identical inputs.
pub fn eval_probe_correct(
    model: &ProbeModel,
    data: &LabeledDataset,
    table: &EmbeddingTable,
    privatization: Privatization,
    params: &PrivacyParams,
) -> Result<Vec<bool>> {
    data.validate(table)?;
    let width = if data.is_pair() { 2 * table.dim() } else { table.dim() };
    if model.feature_dim() != width {
        return Err(Error::DimensionMismatch {
            expected: width,
            actual: model.feature_dim(),
        });
    }
    let privatizer = privatizer_for(table, privatization, params)?;
    let features = featurize(data, table, privatizer.as_ref(), privatization, context::PROBE_EVAL, 0)?;
    Ok(features
        .iter()
        .zip(data.labels())
        .map(|(x, y)| model.predict(x) == y)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::LabeledExample;
    use crate::synthetic::line_table;

    /// Tokens at -2..-1 are class 0, 1..2 class 1.
    fn separable() -> (EmbeddingTable, LabeledDataset) {
        let t = line_table(&[-2.0, -1.5, -1.0, 1.0, 1.5, 2.0]);
        let examples = (0..60)
            .map(|i| {
                let label = (i % 2) as u8;
                let base = if label == 1 { 3 } else { 0 };
                LabeledExample {
                    first: vec![TokenId(base + (i % 3) as u32), TokenId(base + ((i / 3) % 3) as u32)],
                    second: None,
                    label,
                }
            })
            .collect();
        (t, LabeledDataset { examples })
    }

    fn params(eta: f64) -> PrivacyParams {
        PrivacyParams::new(eta, 1, 4).unwrap()
    }

    #[test]
    fn separable_clean_training() {
        let (t, ds) = separable();
        let m = train_probe(&ds, &t, Privatization::None, &params(1.0), &ProbeConfig::default()).unwrap();
        assert!(m.train_accuracy >= 0.99);
        let acc = eval_probe(&m, &ds, &t, Privatization::None, &params(1.0)).unwrap();
        assert_eq!(acc, m.train_accuracy);
        let again = train_probe(&ds, &t, Privatization::None, &params(1.0), &ProbeConfig::default()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn vanishing_noise_matches_clean() {
        // class margin 2, noise mean 1/1e4
        let (t, ds) = separable();
        let cfg = ProbeConfig::default();
        let clean = train_probe(&ds, &t, Privatization::None, &params(1.0), &cfg).unwrap();
        let noisy = train_probe(&ds, &t, Privatization::Representation, &params(1e4), &cfg).unwrap();
        assert!((clean.train_accuracy - noisy.train_accuracy).abs() <= 0.02);
    }

    #[test]
    fn random_model_is_near_chance() {
        let (t, ds) = separable();
        let mut accs = Vec::new();
        for seed in 0..40 {
            let m = ProbeModel::random(1, seed);
            accs.push(eval_probe(&m, &ds, &t, Privatization::None, &params(1.0)).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.05 * 4.0, "{mean}");
    }

    #[test]
    fn errors() {
        let (t, mut ds) = separable();
        let m = ProbeModel::random(3, 0);
        assert!(matches!(
            eval_probe(&m, &ds, &t, Privatization::None, &params(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        ds.examples.iter_mut().for_each(|e| e.label = 1);
        assert!(train_probe(&ds, &t, Privatization::None, &params(1.0), &ProbeConfig::default()).is_err());
        assert!(train_probe(&LabeledDataset::default(), &t, Privatization::None, &params(1.0), &ProbeConfig::default()).is_err());
    }

    #[test]
    fn parse_privatization() {
        assert_eq!("none".parse::<Privatization>().unwrap(), Privatization::None);
        assert_eq!("text".parse::<Privatization>().unwrap(), Privatization::Text);
        assert_eq!("representation".parse::<Privatization>().unwrap(), Privatization::Representation);
        assert!("x".parse::<Privatization>().is_err());
    }
}
