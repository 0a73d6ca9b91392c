//! Forward pass of the toy MoE transformer.
//!
//! Sublayer math runs in f32 (with f64 dot-product accumulation); the residual
//! stream, the final norm and the logits are kept in f64 so that the trace
//! decomposes the final residual exactly.

use super::config::{ModelConfig, NormKind, MAX_SEQ_LEN};
use super::trace::{ExpertActivation, ForwardTrace, LayerTrace, PositionTrace};
use super::weights::{ExpertWeights, LayerWeights};
use super::Model;
use crate::error::{Error, Result};
use crate::linalg::{swish, top_k_indices};

pub const NORM_EPS: f64 = 1e-5;

/// Mean and divisor of a normalization evaluated on one residual vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub divisor: f64,
}

impl NormStats {
    pub fn of(r: &[f64], kind: NormKind) -> Self {
        let n = r.len() as f64;
        match kind {
            NormKind::Rms => {
                let ms = r.iter().map(|x| x * x).sum::<f64>() / n;
                Self {
                    mean: 0.0,
                    divisor: (ms + NORM_EPS).sqrt(),
                }
            }
            NormKind::Layernorm => {
                let mean = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                Self {
                    mean,
                    divisor: (var + NORM_EPS).sqrt(),
                }
            }
        }
    }
}

pub fn normalize_f32(r: &[f64], scale: &[f32], kind: NormKind) -> Vec<f32> {
    let stats = NormStats::of(r, kind);
    let inv = 1.0 / stats.divisor;
    r.iter()
        .zip(scale)
        .map(|(x, s)| ((x - stats.mean) * inv * *s as f64) as f32)
        .collect()
}

/// Selected experts and their gates for one token.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    pub scores: Vec<f32>,
    pub selected: Vec<usize>,
    pub gates: Vec<f32>,
}

/// Top-`n_active` selection over the non-shared experts, softmax over the
/// selected scores only; shared experts (indices `0..n_shared`) get gate 1.
pub fn route_scores(scores: Vec<f32>, n_active: usize, n_shared: usize) -> Routing {
    let n = scores.len();
    let routable: Vec<f32> = scores[n_shared..].to_vec();
    let selected: Vec<usize> = top_k_indices(&routable, n_active)
        .into_iter()
        .map(|i| i + n_shared)
        .collect();
    let max = selected
        .iter()
        .map(|&i| scores[i] as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = selected.iter().map(|&i| (scores[i] as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut gates = vec![0.0f32; n];
    for g in gates.iter_mut().take(n_shared) {
        *g = 1.0;
    }
    for (&i, e) in selected.iter().zip(&exps) {
        gates[i] = (e / total) as f32;
    }
    Routing {
        scores,
        selected,
        gates,
    }
}

/// `h = Swish(W_gate x) * (W_up x)`, `out = W_down h`.
pub fn expert_forward(x: &[f32], expert: &ExpertWeights) -> Result<(Vec<f32>, Vec<f32>)> {
    if expert.gate.cols != x.len() || expert.up.cols != x.len() || expert.down.cols != expert.gate.rows {
        return Err(Error::Config(format!(
            "expert shape mismatch: x has {} dims, gate {:?}, up {:?}, down {:?}",
            x.len(),
            expert.gate.shape(),
            expert.up.shape(),
            expert.down.shape()
        )));
    }
    let gate = expert.gate.matvec(x);
    let up = expert.up.matvec(x);
    let h: Vec<f32> = gate.iter().zip(&up).map(|(g, u)| swish(*g) * u).collect();
    let out = expert.down.matvec(&h);
    Ok((h, out))
}

impl Model {
    pub fn route(&self, x: &[f32], layer: usize) -> Result<Routing> {
        let router = self.weights.layers[layer]
            .router
            .as_ref()
            .ok_or_else(|| Error::Config(format!("layer {layer} is not an MoE layer")))?;
        Ok(route_scores(
            router.matvec(x),
            self.config.n_active,
            self.config.n_shared,
        ))
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<ForwardTrace> {
        let cfg = &self.config;
        if tokens.len() > MAX_SEQ_LEN {
            return Err(Error::Input {
                position: MAX_SEQ_LEN,
                message: format!("sequence length {} exceeds maximum {MAX_SEQ_LEN}", tokens.len()),
            });
        }
        if let Some(p) = tokens.iter().position(|&t| t as usize >= cfg.vocab_size) {
            return Err(Error::Input {
                position: p,
                message: format!("token id {} out of range (vocab_size {})", tokens[p], cfg.vocab_size),
            });
        }
        let mut residual: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&t| self.weights.embed.row(t as usize).iter().map(|v| *v as f64).collect())
            .collect();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for (l, lw) in self.weights.layers.iter().enumerate() {
            let residual_in = residual.clone();
            let attn = attention(cfg, lw, &residual);
            for (r, a) in residual.iter_mut().zip(&attn) {
                for (x, y) in r.iter_mut().zip(a) {
                    *x += *y as f64;
                }
            }
            let mut positions = Vec::with_capacity(tokens.len());
            for (p, (r_in, attn_update)) in residual_in.into_iter().zip(attn).enumerate() {
                let x = normalize_f32(&residual[p], &lw.ffn_norm, cfg.norm_kind);
                let (scores, gates, active) = if cfg.is_moe(l) {
                    let routing = self.route(&x, l)?;
                    let mut active: Vec<usize> = (0..cfg.n_shared).collect();
                    active.extend(&routing.selected);
                    active.sort_unstable();
                    (routing.scores, routing.gates, active)
                } else {
                    (Vec::new(), vec![1.0], vec![0])
                };
                let mut experts = Vec::with_capacity(active.len());
                let mut acc = vec![0.0f64; cfg.d_model];
                for e in active {
                    let (hidden, output) = expert_forward(&x, &lw.experts[e])?;
                    let g = gates[e];
                    for (a, o) in acc.iter_mut().zip(&output) {
                        *a += g as f64 * *o as f64;
                    }
                    experts.push(ExpertActivation {
                        expert: e,
                        gate: g,
                        hidden,
                        output,
                    });
                }
                let ffn_update: Vec<f32> = acc.iter().map(|v| *v as f32).collect();
                for (x, y) in residual[p].iter_mut().zip(&ffn_update) {
                    *x += *y as f64;
                }
                positions.push(PositionTrace {
                    residual_in: r_in,
                    attn_update,
                    ffn_update,
                    router_scores: scores,
                    gates,
                    experts,
                });
            }
            layers.push(LayerTrace { positions });
        }
        let logits = residual.iter().map(|r| self.final_logits(r)).collect();
        Ok(ForwardTrace {
            tokens: tokens.to_vec(),
            layers,
            final_residual: residual,
            logits,
        })
    }

    /// `LN(r) W_U` in f64.
    pub fn final_logits(&self, r: &[f64]) -> Vec<f64> {
        let stats = NormStats::of(r, self.config.norm_kind);
        let normed: Vec<f64> = r
            .iter()
            .zip(&self.weights.final_norm)
            .map(|(x, s)| (x - stats.mean) / stats.divisor * *s as f64)
            .collect();
        self.weights.unembed.vecmat_f64(&normed)
    }
}

/// Causal multi-head self-attention with pre-norm; returns `Δr_attn` per position.
fn attention(cfg: &ModelConfig, lw: &LayerWeights, residual: &[Vec<f64>]) -> Vec<Vec<f32>> {
    let t = residual.len();
    let dh = cfg.head_dim();
    let xs: Vec<Vec<f32>> = residual
        .iter()
        .map(|r| normalize_f32(r, &lw.attn_norm, cfg.norm_kind))
        .collect();
    let q: Vec<Vec<f32>> = xs.iter().map(|x| lw.attn.q.matvec(x)).collect();
    let k: Vec<Vec<f32>> = xs.iter().map(|x| lw.attn.k.matvec(x)).collect();
    let v: Vec<Vec<f32>> = xs.iter().map(|x| lw.attn.v.matvec(x)).collect();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut out = Vec::with_capacity(t);
    let mut weights = vec![0.0f64; t];
    for p in 0..t {
        let mut z = vec![0.0f32; cfg.d_model];
        for h in 0..cfg.n_heads {
            let span = h * dh..(h + 1) * dh;
            let qh = &q[p][span.clone()];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=p {
                let s = crate::linalg::dot_f32(qh, &k[j][span.clone()]) * inv_sqrt;
                weights[j] = s;
                max = max.max(s);
            }
            let mut total = 0.0;
            for w in weights.iter_mut().take(p + 1) {
                *w = (*w - max).exp();
                total += *w;
            }
            for c in span.clone() {
                let mut acc = 0.0f64;
                for j in 0..=p {
                    acc += weights[j] * v[j][c] as f64;
                }
                z[c] = (acc / total) as f32;
            }
        }
        out.push(lw.attn.o.matvec(&z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::Weights;

    fn expert(gate: Vec<f32>, up: Vec<f32>, down: Vec<f32>, d: usize, d_ff: usize) -> ExpertWeights {
        ExpertWeights {
            gate: Matrix::from_vec(d_ff, d, gate),
            up: Matrix::from_vec(d_ff, d, up),
            down: Matrix::from_vec(d, d_ff, down),
        }
    }

    #[test]
    fn zero_input_gives_zero_hidden_and_output() {
        let w = Weights::random(&ModelConfig::small_moe()).unwrap();
        let (h, out) = expert_forward(&[0.0; 32], &w.layers[0].experts[0]).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_evaluated_two_dim_expert() {
        // sigma(1) = 1 / (1 + e^-1) = 0.7310585786300049 (high-precision reference)
        let e = expert(vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0], 2, 1);
        let (h, out) = expert_forward(&[1.0, 1.0], &e).unwrap();
        assert!((h[0] as f64 - 0.7310585786300049).abs() < 1e-7);
        assert!((out[0] - 2.0 * h[0]).abs() < 1e-7);
        assert!((out[1] + h[0]).abs() < 1e-7);
    }

    #[test]
    fn large_gate_makes_swish_linear() {
        // z - swish(z) = z * sigmoid(-z) < z * exp(-z); that bound drops below
        // 1e-8 only from z = 22 on (at z = 20 the gap is about 4.1e-8)
        for z in [20.0f32, 22.0, 25.0, 40.0] {
            let gap = z as f64 - swish(z) as f64;
            assert!(gap.abs() <= z as f64 * (-(z as f64)).exp() + 1e-6);
        }
        let z = 22.0f64;
        assert!(z - z * crate::linalg::sigmoid(z) < 1e-8);
        let e = expert(vec![30.0, 0.0], vec![0.0, 2.0], vec![1.0, 0.0], 2, 1);
        let (h, _) = expert_forward(&[1.0, 1.0], &e).unwrap();
        assert!((h[0] - 60.0).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let e = expert(vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0], 2, 1);
        assert!(matches!(expert_forward(&[1.0, 1.0, 1.0], &e), Err(Error::Config(_))));
    }

    #[test]
    fn top_all_routing_is_full_softmax() {
        let r = route_scores(vec![0.5, -1.0, 2.0, 0.0], 4, 0);
        let sum: f32 = r.gates.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let z: f64 = [0.5f64, -1.0, 2.0, 0.0].iter().map(|s| s.exp()).sum();
        assert!((r.gates[2] as f64 - 2.0f64.exp() / z).abs() < 1e-6);
    }

    #[test]
    fn routing_ties_go_to_lowest_index() {
        let r = route_scores(vec![3.0, 1.0, 1.0, 0.0], 2, 0);
        assert_eq!(r.selected, vec![0, 1]);
        let e2 = (-2.0f64).exp();
        assert!((r.gates[0] as f64 - 1.0 / (1.0 + e2)).abs() < 1e-6);
        assert!((r.gates[1] as f64 - e2 / (1.0 + e2)).abs() < 1e-6);
        assert_eq!(r.gates[2], 0.0);

        let r = route_scores(vec![0.0; 6], 3, 0);
        assert_eq!(r.selected, vec![0, 1, 2]);
        for g in &r.gates[..3] {
            assert!((g - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shared_experts_bypass_softmax() {
        let r = route_scores(vec![-5.0, 0.1, 0.9, 0.3], 2, 1);
        assert_eq!(r.gates[0], 1.0);
        assert_eq!(r.selected, vec![2, 3]);
        assert!((r.gates[2] + r.gates[3] - 1.0).abs() < 1e-6);
        assert_eq!(r.gates[1], 0.0);
    }

    #[test]
    fn out_of_range_token_names_position() {
        let model = Model::random(ModelConfig::small_moe()).unwrap();
        match model.forward(&[1, 2, 5000]) {
            Err(Error::Input { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected input error, got {other:?}"),
        }
    }
}
