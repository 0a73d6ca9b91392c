//! Per-expert token counts and the cluster distributions derived from them.

use serde::{Deserialize, Serialize};

use super::kmeans::ClusterMap;
use crate::attribution::{expert_update, logit_lens};
use crate::corpus::TokenizedCorpus;
use crate::error::{Error, Result};
use crate::model::{ForwardTrace, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    /// Clusters of the input tokens routed to the expert.
    Routing,
    /// Clusters of the tokens the expert's output promotes most.
    Functional,
}

impl std::fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Routing => "routing",
            Self::Functional => "functional",
        })
    }
}

impl std::str::FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routing" => Ok(Self::Routing),
            "functional" => Ok(Self::Functional),
            other => Err(Error::Config(format!("unknown distribution kind `{other}`"))),
        }
    }
}

/// Token histograms of every expert of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTokenCounts {
    pub layer: usize,
    pub kind: DistributionKind,
    /// `counts[expert][token]`.
    pub counts: Vec<Vec<u64>>,
    /// Positions routed to each expert.
    pub routed_positions: Vec<u64>,
    /// All positions seen in the layer.
    pub positions: u64,
    /// Occurrences of every token in the traced text.
    pub token_frequency: Vec<u64>,
}

impl LayerTokenCounts {
    fn new(layer: usize, kind: DistributionKind, n_experts: usize, vocab: usize) -> Self {
        Self {
            layer,
            kind,
            counts: vec![vec![0; vocab]; n_experts],
            routed_positions: vec![0; n_experts],
            positions: 0,
            token_frequency: vec![0; vocab],
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.routed_positions
            .iter_mut()
            .zip(&other.routed_positions)
            .for_each(|(x, y)| *x += y);
        self.token_frequency
            .iter_mut()
            .zip(&other.token_frequency)
            .for_each(|(x, y)| *x += y);
        self.positions += other.positions;
    }

    /// Adds every position of one trace.
    pub fn add_trace(&mut self, model: &Model, trace: &ForwardTrace, n_top: usize) {
        for (pos, &tok) in trace.tokens.iter().enumerate() {
            self.positions += 1;
            self.token_frequency[tok as usize] += 1;
            for a in &trace.at(self.layer, pos).experts {
                self.routed_positions[a.expert] += 1;
                match self.kind {
                    DistributionKind::Routing => self.counts[a.expert][tok as usize] += 1,
                    DistributionKind::Functional => {
                        let v = expert_update(trace, self.layer, a.expert, pos);
                        for (t, _) in logit_lens(model, &v, n_top).top {
                            self.counts[a.expert][t as usize] += 1;
                        }
                    }
                }
            }
        }
    }

    /// Counts over the first `budget` tokens of the corpus, traced chunk by
    /// chunk in parallel. The result does not depend on the thread count.
    pub fn collect(
        model: &Model,
        corpus: &TokenizedCorpus,
        layer: usize,
        kind: DistributionKind,
        budget: usize,
        context: usize,
        n_top: usize,
    ) -> Result<Self> {
        use rayon::prelude::*;
        if layer >= model.config.n_layers {
            return Err(Error::Config(format!("layer {layer} out of range")));
        }
        if kind == DistributionKind::Functional && n_top == 0 {
            return Err(Error::Config("functional distribution needs n_top >= 1".into()));
        }
        let n_experts = model.config.experts_in_layer(layer);
        let vocab = model.config.vocab_size;
        let corpus = corpus.truncated(budget);
        let empty = || Self::new(layer, kind, n_experts, vocab);
        corpus
            .chunks(context)
            .par_iter()
            .map(|chunk| {
                let trace = model.forward(corpus.chunk_tokens(*chunk))?;
                let mut c = empty();
                c.add_trace(model, &trace, n_top);
                Ok(c)
            })
            .try_reduce(empty, |mut a, b| {
                a.merge(&b);
                Ok(a)
            })
    }

    pub fn distribution(&self, expert: usize, map: &ClusterMap) -> Result<ClusterDistribution> {
        let counts = self
            .counts
            .get(expert)
            .ok_or_else(|| Error::Config(format!("expert {expert} out of range at layer {}", self.layer)))?;
        ClusterDistribution::from_token_counts(self.layer, expert, self.kind, counts, map)
    }
}

/// `P_i` over clusters for one expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistribution {
    pub layer: usize,
    pub expert: usize,
    pub kind: DistributionKind,
    pub p: Vec<f64>,
    /// Tokens behind the distribution (`n_i`).
    pub n_tokens: u64,
    /// Set when no token was counted; `p` is then all zeros.
    pub empty: bool,
}

impl ClusterDistribution {
    pub fn from_token_counts(
        layer: usize,
        expert: usize,
        kind: DistributionKind,
        counts: &[u64],
        map: &ClusterMap,
    ) -> Result<Self> {
        if counts.len() != map.assignment.len() {
            return Err(Error::Config(format!(
                "{} token counts for a cluster map over {} tokens",
                counts.len(),
                map.assignment.len()
            )));
        }
        let mut per_cluster = vec![0u64; map.k];
        for (t, c) in counts.iter().enumerate() {
            per_cluster[map.assignment[t]] += c;
        }
        let n_tokens: u64 = per_cluster.iter().sum();
        let p = if n_tokens == 0 {
            vec![0.0; map.k]
        } else {
            per_cluster.iter().map(|c| *c as f64 / n_tokens as f64).collect()
        };
        Ok(Self {
            layer,
            expert,
            kind,
            p,
            n_tokens,
            empty: n_tokens == 0,
        })
    }
}

fn counts_from_traces(
    model: &Model,
    traces: &[ForwardTrace],
    layer: usize,
    kind: DistributionKind,
    n_top: usize,
) -> Result<LayerTokenCounts> {
    if layer >= model.config.n_layers {
        return Err(Error::Config(format!("layer {layer} out of range")));
    }
    let mut c = LayerTokenCounts::new(layer, kind, model.config.experts_in_layer(layer), model.config.vocab_size);
    for t in traces {
        c.add_trace(model, t, n_top);
    }
    Ok(c)
}

/// Clusters of the input tokens routed to `expert`.
pub fn routing_distribution(
    model: &Model,
    traces: &[ForwardTrace],
    layer: usize,
    expert: usize,
    map: &ClusterMap,
) -> Result<ClusterDistribution> {
    counts_from_traces(model, traces, layer, DistributionKind::Routing, 0)?.distribution(expert, map)
}

/// Clusters of the `n_top` tokens each routed output of `expert` promotes.
pub fn functional_distribution(
    model: &Model,
    traces: &[ForwardTrace],
    layer: usize,
    expert: usize,
    map: &ClusterMap,
    n_top: usize,
) -> Result<ClusterDistribution> {
    if n_top == 0 {
        return Err(Error::Config("functional distribution needs n_top >= 1".into()));
    }
    counts_from_traces(model, traces, layer, DistributionKind::Functional, n_top)?.distribution(expert, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn map(assignment: Vec<usize>, k: usize) -> ClusterMap {
        ClusterMap {
            k,
            seed: 0,
            assignment,
            centroids: Matrix::zeros(k, 1),
            inertia: 0.0,
            iterations: 0,
            converged: true,
            empty_clusters: vec![],
        }
    }

    #[test]
    fn token_counts_fold_into_clusters() {
        let m = map(vec![0, 1, 1, 2], 3);
        let d = ClusterDistribution::from_token_counts(0, 0, DistributionKind::Routing, &[2, 1, 1, 0], &m).unwrap();
        assert_eq!(d.p, vec![0.5, 0.5, 0.0]);
        assert_eq!(d.n_tokens, 4);
        let e = ClusterDistribution::from_token_counts(0, 0, DistributionKind::Routing, &[0; 4], &m).unwrap();
        assert!(e.empty);
    }

    #[test]
    fn routing_counts_match_gates() {
        let model = Model::random(crate::model::ModelConfig::small_moe()).unwrap();
        let trace = model.forward(&[4, 9, 4, 100, 7]).unwrap();
        let m = map((0..1024).collect(), 1024);
        let mut total = 0;
        for e in 0..model.config.experts_in_layer(1) {
            let d = routing_distribution(&model, std::slice::from_ref(&trace), 1, e, &m).unwrap();
            let routed = (0..5).filter(|p| trace.at(1, *p).gate(e) > 0.0).count() as u64;
            assert_eq!(d.n_tokens, routed);
            total += d.n_tokens;
        }
        assert_eq!(total, 5 * model.config.n_active as u64);
        let f = functional_distribution(&model, &[trace], 1, 0, &m, 3).unwrap();
        assert_eq!(f.n_tokens % 3, 0);
    }
}
