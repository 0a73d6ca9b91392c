use serde::{Deserialize, Serialize};

/// One expert's activations at one (layer, position). Only experts with a
/// positive gate are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertActivation {
    pub expert: usize,
    pub gate: f32,
    /// Intermediate SwiGLU activation `h` (length `d_ff`).
    pub hidden: Vec<f32>,
    /// Expert output `E_i(x)` before gating (length `d`).
    pub output: Vec<f32>,
}

impl ExpertActivation {
    /// `g_i * E_i(x)` as written to the residual stream.
    pub fn gated_output(&self) -> Vec<f32> {
        self.output.iter().map(|v| v * self.gate).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTrace {
    /// `r^(l)`, accumulated in f64.
    pub residual_in: Vec<f64>,
    pub attn_update: Vec<f32>,
    pub ffn_update: Vec<f32>,
    /// Router scores `s` (empty on dense layers).
    pub router_scores: Vec<f32>,
    /// Gate per expert of the layer; zero when unselected.
    pub gates: Vec<f32>,
    pub experts: Vec<ExpertActivation>,
}

impl PositionTrace {
    pub fn expert(&self, expert: usize) -> Option<&ExpertActivation> {
        self.experts.iter().find(|e| e.expert == expert)
    }

    pub fn gate(&self, expert: usize) -> f32 {
        self.gates.get(expert).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub positions: Vec<PositionTrace>,
}

/// Everything recorded during one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub tokens: Vec<u32>,
    pub layers: Vec<LayerTrace>,
    pub final_residual: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

/// A sublayer (or the embedding) that writes into the residual stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Embedding,
    Attention { layer: usize },
    Ffn { layer: usize },
    Expert { layer: usize, expert: usize },
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn at(&self, layer: usize, position: usize) -> &PositionTrace {
        &self.layers[layer].positions[position]
    }

    pub fn embedding(&self, position: usize) -> &[f64] {
        &self.layers[0].positions[position].residual_in
    }

    /// The embedding plus every attention and FFN update at `position`; their
    /// sum is the final residual.
    pub fn residual_components(&self, position: usize) -> Vec<(Component, Vec<f64>)> {
        let mut out = vec![(Component::Embedding, self.embedding(position).to_vec())];
        for (l, layer) in self.layers.iter().enumerate() {
            let p = &layer.positions[position];
            out.push((Component::Attention { layer: l }, to_f64(&p.attn_update)));
            out.push((Component::Ffn { layer: l }, to_f64(&p.ffn_update)));
        }
        out
    }

    /// `r_embed + sum of all recorded updates`, summed in recording order.
    pub fn reconstruct_residual(&self, position: usize) -> Vec<f64> {
        let mut acc = self.embedding(position).to_vec();
        for layer in &self.layers {
            let p = &layer.positions[position];
            for (a, (x, y)) in acc.iter_mut().zip(p.attn_update.iter().zip(&p.ffn_update)) {
                *a += *x as f64;
                *a += *y as f64;
            }
        }
        acc
    }
}

pub(crate) fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}
