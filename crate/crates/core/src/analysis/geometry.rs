use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{Candidates, EmbeddingTable, TokenId};
use crate::error::{Error, Result};
use crate::mechanism::{sample_noise, PrivacyParams};
use crate::rng::{context, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseNormSource {
    ClosedForm,
    MonteCarlo { samples: usize },
}

/// Noise scale against the neighborhood scale of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub dim: usize,
    pub eta_list: Vec<f64>,
    pub avg_noise_norm: Vec<f64>,
    pub noise_norm_source: NoiseNormSource,
    pub k_list: Vec<usize>,
    pub avg_knn_distance: Vec<f64>,
    pub tokens_evaluated: usize,
}

/// Mean noise norm per `eta` and mean k-th nearest-neighbor distance per `k`
/// over `tokens` (all regular tokens when `None`), neighbors drawn from the
/// regular tokens. `noise_samples == 0` reports the closed form `n / eta`.
///
/// Monte Carlo draws reuse the same streams for every `eta`, so the
/// estimates are exactly proportional to `1 / eta`.
pub fn geometry_profile(
    table: &EmbeddingTable,
    eta_list: &[f64],
    k_list: &[usize],
    noise_samples: usize,
    master_seed: u64,
    tokens: Option<&[TokenId]>,
) -> Result<GeometryReport> {
    let dim = table.dim();
    let regular = table.vocab().regular_ids();
    let max_k = regular.len().saturating_sub(1);
    if let Some(&k) = k_list.iter().find(|&&k| k == 0 || k > max_k) {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={max_k}")));
    }
    let params: Vec<PrivacyParams> = eta_list
        .iter()
        .map(|&eta| PrivacyParams::new(eta, dim, master_seed))
        .collect::<Result<_>>()?;

    let (avg_noise_norm, noise_norm_source) = if noise_samples == 0 {
        (
            params.iter().map(PrivacyParams::mean_noise_norm).collect(),
            NoiseNormSource::ClosedForm,
        )
    } else {
        let mut means = Vec::with_capacity(params.len());
        for p in &params {
            let radii: Vec<f64> = (0..noise_samples as u64)
                .into_par_iter()
                .map(|i| {
                    sample_noise(p, RngStream::new(master_seed, context::GEOMETRY, i, 0))
                        .map(|s| s.radius)
                })
                .collect::<Result<_>>()?;
            means.push(radii.iter().sum::<f64>() / noise_samples as f64);
        }
        (means, NoiseNormSource::MonteCarlo { samples: noise_samples })
    };

    let queries: Vec<TokenId> = match tokens {
        Some(ids) => {
            for &id in ids {
                table.check_id(id)?;
            }
            ids.to_vec()
        }
        None => regular.to_vec(),
    };
    let kmax = k_list.iter().copied().max().unwrap_or(0);
    let mut avg_knn_distance = vec![0.0; k_list.len()];
    if kmax > 0 && !queries.is_empty() {
        let rows: Vec<Vec<f64>> = queries
            .par_iter()
            .map(|&id| {
                let nn = table.knn_among(id, kmax, Candidates::RegularOnly)?;
                Ok(k_list.iter().map(|&k| nn[k - 1].distance).collect())
            })
            .collect::<Result<_>>()?;
        for row in &rows {
            for (acc, d) in avg_knn_distance.iter_mut().zip(row) {
                *acc += d;
            }
        }
        avg_knn_distance
            .iter_mut()
            .for_each(|a| *a /= rows.len() as f64);
    }

    Ok(GeometryReport {
        dim,
        eta_list: eta_list.to_vec(),
        avg_noise_norm,
        noise_norm_source,
        k_list: k_list.to_vec(),
        avg_knn_distance,
        tokens_evaluated: queries.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_table, line_table};

    #[test]
    fn line_table_knn_averages() {
        // pairwise distances: |0-1| = 1, |0-3| = 3, |1-3| = 2
        // 1-NN: 1, 1, 2 -> 4/3; 2-NN: 3, 2, 3 -> 8/3
        let t = line_table(&[0.0, 1.0, 3.0]);
        let r = geometry_profile(&t, &[1.0], &[1, 2], 0, 0, None).unwrap();
        assert!((r.avg_knn_distance[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((r.avg_knn_distance[1] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.avg_noise_norm, vec![1.0]);
        assert_eq!(r.noise_norm_source, NoiseNormSource::ClosedForm);
    }

    #[test]
    fn monte_carlo_noise_norm_decreases() {
        let t = gaussian_table(20, 8, 1.0, 1);
        let etas = [50.0, 75.0, 100.0, 125.0, 150.0, 175.0];
        let r = geometry_profile(&t, &etas, &[1, 2, 5], 2000, 3, None).unwrap();
        for w in r.avg_noise_norm.windows(2) {
            assert!(w[0] > w[1]);
        }
        for w in r.avg_knn_distance.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (m, eta) in r.avg_noise_norm.iter().zip(etas) {
            assert!((m - 8.0 / eta).abs() / (8.0 / eta) < 0.03);
        }
    }

    #[test]
    fn invalid_inputs() {
        let t = line_table(&[0.0, 1.0, 3.0]);
        assert!(geometry_profile(&t, &[1.0], &[3], 0, 0, None).is_err());
        assert!(geometry_profile(&t, &[1.0], &[0], 0, 0, None).is_err());
        assert!(geometry_profile(&t, &[0.0], &[1], 0, 0, None).is_err());
    }
}
