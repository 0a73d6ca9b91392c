//! Monte Carlo estimate of the divergence a uniformly routed expert would show.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::jsd::jsd;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean: f64,
    pub stderr: f64,
    pub mc_samples: usize,
    /// Set when `n = 0`; the baseline is then 0 by convention.
    pub empty: bool,
}

/// One multinomial draw of `n` tokens over `q`, built from sequential binomials.
pub fn sample_multinomial(q: &[f64], n: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut counts = vec![0u64; q.len()];
    let mut remaining = n;
    let mut mass: f64 = q.iter().sum();
    for (c, &qc) in q.iter().enumerate() {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        let p = (qc / mass).clamp(0.0, 1.0);
        let draw = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).expect("p in [0, 1]").sample(rng)
        };
        counts[c] = draw;
        remaining -= draw;
        mass -= qc;
    }
    counts
}

/// Mean and standard error of `JSD(P_hat || q)` where `P_hat` is the empirical
/// distribution of `n` tokens drawn from `q`.
///
/// Clusters are visited in order of decreasing `q` (stable), so the estimate
/// does not depend on how clusters are labelled.
pub fn random_baseline(q: &[f64], n: u64, mc_samples: usize, seed: u64) -> Result<Baseline> {
    if mc_samples == 0 {
        return Err(Error::Config("baseline needs at least one Monte Carlo sample".into()));
    }
    if n == 0 {
        return Ok(Baseline {
            mean: 0.0,
            stderr: 0.0,
            mc_samples,
            empty: true,
        });
    }
    let mut sorted = q.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..mc_samples)
        .map(|_| {
            let counts = sample_multinomial(&sorted, n, &mut rng);
            let p: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
            jsd(&p, &sorted)
        })
        .collect::<Result<_>>()?;
    let m = mc_samples as f64;
    let mean = values.iter().sum::<f64>() / m;
    let stderr = if mc_samples > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(Baseline {
        mean,
        stderr,
        mc_samples,
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multinomial_draws_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [0, 1, 17, 1000] {
            let c = sample_multinomial(&[0.5, 0.0, 0.3, 0.2], n, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn zero_tokens_and_zero_samples() {
        let b = random_baseline(&[0.5, 0.5], 0, 10, 1).unwrap();
        assert!(b.empty && b.mean == 0.0);
        assert!(matches!(random_baseline(&[0.5, 0.5], 5, 0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn point_mass_base_rate_has_zero_baseline() {
        let b = random_baseline(&[1.0, 0.0, 0.0], 50, 20, 9).unwrap();
        assert_eq!(b.mean, 0.0);
    }
}
