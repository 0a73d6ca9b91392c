//! Logit lens, direct logit attribution and expert contribution scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::top_k_indices;
use crate::model::{Component, ForwardTrace, Model, NormKind, NormStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensResult {
    pub logits: Vec<f64>,
    /// `(token, logit)` by descending logit, ties to the lower token id.
    pub top: Vec<(u32, f64)>,
}

fn top_of(logits: Vec<f64>, n_top: usize) -> LensResult {
    let n = if n_top > logits.len() {
        tracing::warn!(n_top, vocab = logits.len(), "n_top exceeds vocabulary; clipped");
        logits.len()
    } else {
        n_top
    };
    let top = top_k_indices(&logits, n).into_iter().map(|i| (i as u32, logits[i])).collect();
    LensResult { logits, top }
}

/// `v W_U` with no normalization of `v`.
pub fn logit_lens(model: &Model, v: &[f64], n_top: usize) -> LensResult {
    top_of(model.weights.unembed.vecmat_f64(v), n_top)
}

/// Lens variant that passes `v` through the final norm first.
pub fn logit_lens_normalized(model: &Model, v: &[f64], n_top: usize) -> LensResult {
    top_of(model.final_logits(v), n_top)
}

/// The final norm linearized at `final_residual`: the divisor is frozen at its
/// value on the final residual and the scale vector is applied. For layernorm
/// the mean of `v` itself is removed, which is linear in `v`, so contributions
/// of a decomposition still add up to the normalized final residual.
pub fn ln_linear(model: &Model, v: &[f64], final_residual: &[f64]) -> Result<Vec<f64>> {
    if final_residual.iter().all(|x| *x == 0.0) {
        return Err(Error::Numeric("final residual has zero norm".into()));
    }
    let kind = model.config.norm_kind;
    let divisor = NormStats::of(final_residual, kind).divisor;
    let mean = match kind {
        NormKind::Rms => 0.0,
        NormKind::Layernorm => v.iter().sum::<f64>() / v.len() as f64,
    };
    Ok(v.iter()
        .zip(&model.weights.final_norm)
        .map(|(x, s)| (x - mean) / divisor * *s as f64)
        .collect())
}

/// `LN_linear(v) . W_U[:, target]`.
pub fn dla(model: &Model, v: &[f64], final_residual: &[f64], target: u32) -> Result<f64> {
    let t = target as usize;
    if t >= model.config.vocab_size {
        return Err(Error::Input {
            position: 0,
            message: format!("target token {target} out of range"),
        });
    }
    let lin = ln_linear(model, v, final_residual)?;
    let u = &model.weights.unembed;
    Ok(lin.iter().enumerate().map(|(r, x)| x * u.get(r, t) as f64).sum())
}

/// DLA toward every vocabulary entry.
pub fn dla_logits(model: &Model, v: &[f64], final_residual: &[f64]) -> Result<Vec<f64>> {
    Ok(model.weights.unembed.vecmat_f64(&ln_linear(model, v, final_residual)?))
}

/// Residual contribution of one component at `position`.
pub fn component_vector(trace: &ForwardTrace, component: Component, position: usize) -> Vec<f64> {
    match component {
        Component::Embedding => trace.embedding(position).to_vec(),
        Component::Attention { layer } => to_f64(&trace.at(layer, position).attn_update),
        Component::Ffn { layer } => to_f64(&trace.at(layer, position).ffn_update),
        Component::Expert { layer, expert } => expert_update(trace, layer, expert, position),
    }
}

/// `g_i E_i(x)` in f64; zero when the expert was not routed.
pub fn expert_update(trace: &ForwardTrace, layer: usize, expert: usize, position: usize) -> Vec<f64> {
    let pt = trace.at(layer, position);
    match pt.expert(expert) {
        Some(a) => a.output.iter().map(|o| a.gate as f64 * *o as f64).collect(),
        None => vec![0.0; pt.residual_in.len()],
    }
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

/// `g_i |E_i(x)|_2`, zero when unrouted.
pub fn expert_contribution(trace: &ForwardTrace, layer: usize, expert: usize, position: usize) -> f64 {
    trace
        .at(layer, position)
        .expert(expert)
        .map(|a| a.gate as f64 * crate::linalg::l2_norm_f32(&a.output))
        .unwrap_or(0.0)
}

/// Per-position contributions of one expert over a whole trace.
pub fn contributions(trace: &ForwardTrace, layer: usize, expert: usize) -> Vec<f64> {
    (0..trace.len()).map(|p| expert_contribution(trace, layer, expert, p)).collect()
}

/// Maximum contribution over the sequence.
pub fn sequence_score(trace: &ForwardTrace, layer: usize, expert: usize) -> f64 {
    contributions(trace, layer, expert).into_iter().fold(0.0, f64::max)
}
