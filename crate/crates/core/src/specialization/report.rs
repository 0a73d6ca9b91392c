//! Baseline-adjusted specialization scores per expert and per layer.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::random_baseline;
use super::distribution::{ClusterDistribution, DistributionKind};
use super::jsd::jsd;
use crate::error::{Error, Result};
use crate::linalg::derive_seed;
use crate::protocol::MC_SAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecializationParams {
    pub mc_samples: usize,
    pub seed: u64,
    /// Weight each expert's `P_i` by its token count when forming `Q_L`.
    pub token_weighted_base_rate: bool,
}

impl Default for SpecializationParams {
    fn default() -> Self {
        Self {
            mc_samples: MC_SAMPLES,
            seed: 0,
            token_weighted_base_rate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub layer: usize,
    pub expert: usize,
    /// `S_i = JSD(P_i || Q_L)`.
    pub raw: f64,
    /// `S_hat_i`, the random-routing baseline.
    pub baseline: f64,
    pub baseline_stderr: f64,
    /// `S_i - S_hat_i`.
    pub adjusted: f64,
    pub n_tokens: u64,
    /// No token reached this expert; excluded from `Q_L` and the layer mean.
    pub unrouted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecializationReport {
    pub layer: usize,
    pub k: usize,
    pub kind: DistributionKind,
    pub params: SpecializationParams,
    /// `Q_L`.
    pub base_rate: Vec<f64>,
    pub experts: Vec<ExpertScore>,
    pub distributions: Vec<ClusterDistribution>,
    /// Mean adjusted score over routed experts.
    pub layer_mean: f64,
}

/// `Q_L` from the routed experts' distributions, summed in expert order.
pub fn base_rate(dists: &[ClusterDistribution], token_weighted: bool) -> Result<Vec<f64>> {
    let routed: Vec<&ClusterDistribution> = dists.iter().filter(|d| !d.empty).collect();
    let first = routed
        .first()
        .ok_or_else(|| Error::Data("no expert in the layer received any token".into()))?;
    let mut q = vec![0.0; first.p.len()];
    let weight = |d: &ClusterDistribution| if token_weighted { d.n_tokens as f64 } else { 1.0 };
    let total: f64 = routed.iter().map(|d| weight(d)).sum();
    for d in &routed {
        if d.p.len() != q.len() {
            return Err(Error::Config("distributions over different cluster counts".into()));
        }
        let w = weight(d);
        q.iter_mut().zip(&d.p).for_each(|(a, b)| *a += w * b);
    }
    q.iter_mut().for_each(|a| *a /= total);
    Ok(q)
}

/// Scores every expert of one layer against the layer's base rate.
pub fn specialization_report(
    dists: &[ClusterDistribution],
    k: usize,
    params: &SpecializationParams,
) -> Result<SpecializationReport> {
    let first = dists.first().ok_or_else(|| Error::Data("no distributions given".into()))?;
    let (layer, kind) = (first.layer, first.kind);
    if dists.iter().any(|d| d.layer != layer || d.kind != kind || d.p.len() != k) {
        return Err(Error::Config("distributions must share layer, kind and k".into()));
    }
    let q = base_rate(dists, params.token_weighted_base_rate)?;
    let experts: Vec<ExpertScore> = dists
        .par_iter()
        .map(|d| {
            let raw = if d.empty { 0.0 } else { jsd(&d.p, &q)? };
            let seed = derive_seed(params.seed, &[layer as u64, d.expert as u64, k as u64]);
            let b = random_baseline(&q, d.n_tokens, params.mc_samples, seed)?;
            if d.empty {
                tracing::warn!(layer, expert = d.expert, "expert received no tokens");
            }
            Ok(ExpertScore {
                layer,
                expert: d.expert,
                raw,
                baseline: b.mean,
                baseline_stderr: b.stderr,
                adjusted: raw - b.mean,
                n_tokens: d.n_tokens,
                unrouted: d.empty,
            })
        })
        .collect::<Result<_>>()?;
    let routed: Vec<f64> = experts.iter().filter(|e| !e.unrouted).map(|e| e.adjusted).collect();
    let layer_mean = routed.iter().sum::<f64>() / routed.len() as f64;
    Ok(SpecializationReport {
        layer,
        k,
        kind,
        params: *params,
        base_rate: q,
        experts,
        distributions: dists.to_vec(),
        layer_mean,
    })
}

/// One point of the per-layer series plotted against depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub layer: usize,
    pub k: usize,
    pub kind: DistributionKind,
    pub mean_adjusted: f64,
    pub mean_raw: f64,
    pub mean_baseline: f64,
    pub routed_experts: usize,
}

impl SpecializationReport {
    pub fn layer_point(&self) -> LayerPoint {
        let routed: Vec<&ExpertScore> = self.experts.iter().filter(|e| !e.unrouted).collect();
        let mean = |f: fn(&ExpertScore) -> f64| routed.iter().map(|e| f(e)).sum::<f64>() / routed.len() as f64;
        LayerPoint {
            layer: self.layer,
            k: self.k,
            kind: self.kind,
            mean_adjusted: self.layer_mean,
            mean_raw: mean(|e| e.raw),
            mean_baseline: mean(|e| e.baseline),
            routed_experts: routed.len(),
        }
    }
}

/// Writes one row per expert of every report.
pub fn write_scores_csv(reports: &[SpecializationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record([
        "layer", "k", "kind", "expert", "raw", "baseline", "baseline_stderr", "adjusted", "n_tokens", "unrouted",
    ])
    .map_err(io)?;
    for r in reports {
        for e in &r.experts {
            w.write_record([
                r.layer.to_string(),
                r.k.to_string(),
                r.kind.to_string(),
                e.expert.to_string(),
                e.raw.to_string(),
                e.baseline.to_string(),
                e.baseline_stderr.to_string(),
                e.adjusted.to_string(),
                e.n_tokens.to_string(),
                e.unrouted.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the per-layer series as JSON.
pub fn write_series_json(reports: &[SpecializationReport], path: &Path) -> Result<()> {
    let series: Vec<LayerPoint> = reports.iter().map(|r| r.layer_point()).collect();
    std::fs::write(path, serde_json::to_string_pretty(&series)? + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(expert: usize, p: Vec<f64>, n: u64) -> ClusterDistribution {
        ClusterDistribution {
            layer: 2,
            expert,
            kind: DistributionKind::Routing,
            empty: n == 0,
            p,
            n_tokens: n,
        }
    }

    #[test]
    fn unrouted_experts_are_flagged_and_excluded() {
        let dists = vec![
            dist(0, vec![1.0, 0.0], 10),
            dist(1, vec![0.0, 1.0], 30),
            dist(2, vec![0.0, 0.0], 0),
        ];
        let r = specialization_report(&dists, 2, &SpecializationParams::default()).unwrap();
        assert_eq!(r.base_rate, vec![0.5, 0.5]);
        assert!(r.experts[2].unrouted);
        assert_eq!(r.experts[2].adjusted, 0.0);
        let expect = (r.experts[0].adjusted + r.experts[1].adjusted) / 2.0;
        assert_eq!(r.layer_mean, expect);
        let weighted = base_rate(&dists, true).unwrap();
        assert_eq!(weighted, vec![0.25, 0.75]);
    }

    #[test]
    fn identical_experts_score_zero_raw() {
        let dists: Vec<_> = (0..4).map(|e| dist(e, vec![0.2, 0.3, 0.5], 100)).collect();
        let r = specialization_report(&dists, 3, &SpecializationParams::default()).unwrap();
        for e in &r.experts {
            assert!(e.raw < 1e-15);
            assert!(e.baseline > 0.0);
            assert!(e.adjusted < 0.0);
        }
    }

    #[test]
    fn outputs_are_written() {
        let dists = vec![dist(0, vec![1.0, 0.0], 5), dist(1, vec![0.5, 0.5], 5)];
        let r = specialization_report(&dists, 2, &SpecializationParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scores_csv(std::slice::from_ref(&r), &dir.path().join("s.csv")).unwrap();
        write_series_json(&[r], &dir.path().join("s.json")).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
