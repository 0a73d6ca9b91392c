//! Toy decoder-only MoE transformer with full activation tracing.

mod config;
pub mod container;
mod forward;
mod plant;
mod trace;
mod weights;

use std::path::Path;

pub use config::{FfnKind, ModelConfig, NormKind, MAX_SEQ_LEN};
pub use forward::{expert_forward, normalize_f32, route_scores, NormStats, Routing, NORM_EPS};
pub use plant::{plant_dense_smeared, plant_expert, plant_experts, PlantGains, PlantSpec};
pub use trace::{Component, ExpertActivation, ForwardTrace, LayerTrace, PositionTrace};
pub use weights::{AttentionWeights, ExpertWeights, LayerWeights, Weights};

use crate::error::Result;

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// Immutable config + weights; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub weights: Weights,
}

impl Model {
    pub fn new(config: ModelConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(Self { config, weights })
    }

    pub fn random(config: ModelConfig) -> Result<Self> {
        let weights = Weights::random(&config)?;
        Self::new(config, weights)
    }

    /// Writes `config.json` and `weights.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        self.config.save(&dir.join(CONFIG_FILE))?;
        container::write_file(&dir.join(WEIGHTS_FILE), self.weights.named_tensors())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = ModelConfig::load(&dir.join(CONFIG_FILE))?;
        let tensors = container::read_file(&dir.join(WEIGHTS_FILE))?;
        let weights = Weights::from_named(&config, tensors)?;
        Self::new(config, weights)
    }

    /// Forward passes over independent sequences, in parallel.
    pub fn forward_batch(&self, sequences: &[Vec<u32>]) -> Result<Vec<ForwardTrace>> {
        use rayon::prelude::*;
        sequences.par_iter().map(|s| self.forward(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::random(ModelConfig::small_moe()).unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(Model::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn forward_is_bit_identical() {
        let model = Model::random(ModelConfig::small_moe()).unwrap();
        let tokens = [5, 17, 300, 2, 2, 999];
        assert_eq!(model.forward(&tokens).unwrap(), model.forward(&tokens).unwrap());
    }

    #[test]
    fn zero_network_logits_are_normed_embedding_times_unembed() {
        let config = ModelConfig::small_moe();
        let random = Weights::random(&config).unwrap();
        let mut w = Weights::zeros(&config).unwrap();
        w.embed = random.embed.clone();
        w.unembed = random.unembed.clone();
        let model = Model::new(config, w).unwrap();
        let trace = model.forward(&[42]).unwrap();
        for layer in &trace.layers {
            assert!(layer.positions[0].attn_update.iter().all(|v| *v == 0.0));
            assert!(layer.positions[0].ffn_update.iter().all(|v| *v == 0.0));
        }
        let e: Vec<f64> = random.embed.row(42).iter().map(|v| *v as f64).collect();
        let ms = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        let normed: Vec<f64> = e.iter().map(|v| v / (ms + 1e-5).sqrt()).collect();
        let expect = random.unembed.vecmat_f64(&normed);
        for (a, b) in trace.logits[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gate_support_matches_active_plus_shared() {
        let mut config = ModelConfig::small_moe();
        config.n_shared = 1;
        let model = Model::random(config).unwrap();
        let trace = model.forward(&[1, 2, 3, 4]).unwrap();
        for layer in &trace.layers {
            for p in &layer.positions {
                assert_eq!(p.gates.iter().filter(|g| **g > 0.0).count(), 3);
                assert_eq!(p.experts.len(), 3);
                let routed: f32 = p.gates[1..].iter().sum();
                assert!((routed - 1.0).abs() < 1e-6);
            }
        }
    }
}
