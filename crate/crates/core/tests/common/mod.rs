#![allow(dead_code)]

use expertscope::autointerp::{ActivationItem, ExpertPool, MinedExample};
use expertscope::model::{FfnKind, ModelConfig, NormKind};

pub fn moe_config(n_experts: usize, n_active: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d_model: 64,
        n_layers: 2,
        n_heads: 4,
        d_ff: 64,
        vocab_size: 1024,
        n_experts,
        n_active,
        n_shared: 0,
        ffn_kind: vec![FfnKind::Moe; 2],
        norm_kind: NormKind::Rms,
        seed,
    }
}

const WORDS: [&str; 8] = [" the", " river", " ran", " past", " 42", " old", " mills", "."];

/// Hand-built example whose content depends only on `(expert, i)`.
pub fn fixture_example(layer: usize, expert: usize, i: usize) -> MinedExample {
    let n = 8;
    let token_strs: Vec<String> = (0..n).map(|p| WORDS[(p + i + expert) % WORDS.len()].to_string()).collect();
    let routed: Vec<bool> = (0..n).map(|p| (p + i) % 3 == 0).collect();
    let contributions: Vec<f64> = (0..n)
        .map(|p| if routed[p] { 0.25 * (p + 1) as f64 + 0.125 * i as f64 } else { 0.0 })
        .collect();
    let mut items: Vec<usize> = (0..n).filter(|p| routed[*p]).collect();
    items.sort_by(|a, b| contributions[*b].partial_cmp(&contributions[*a]).unwrap());
    MinedExample {
        id: format!("L{layer}E{expert}-d{i}-p0"),
        layer,
        expert,
        doc: i,
        start: 0,
        tokens: (0..n as u32).collect(),
        token_strs: token_strs.clone(),
        routed,
        sequence_score: contributions.iter().copied().fold(0.0, f64::max),
        top_activations: items
            .into_iter()
            .take(5)
            .map(|p| ActivationItem {
                position: p,
                token_str: token_strs[p].clone(),
                score: contributions[p],
                promoted: vec![" water".into(), " bank".into(), format!(" w{p}")],
            })
            .collect(),
        contributions,
    }
}

pub fn fixture_pool(layer: usize, expert: usize) -> ExpertPool {
    ExpertPool {
        layer,
        expert,
        examples: (0..40).map(|i| fixture_example(layer, expert, i)).collect(),
        explainer: (0..20).collect(),
        scorer_positive: (20..30).collect(),
        held_back: (30..40).collect(),
        unlabelable: None,
    }
}
