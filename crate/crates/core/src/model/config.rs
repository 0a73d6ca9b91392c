use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on sequence length accepted by the forward pass.
pub const MAX_SEQ_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    Dense,
    Moe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Rms,
    Layernorm,
}

/// Architecture hyperparameters of the toy decoder-only transformer.
///
/// `ffn_kind` has one entry per layer. A dense layer owns a single FFN that is
/// addressed as expert 0; MoE layers own `n_experts` experts. Shared experts
/// occupy the indices `0..n_shared` and are always on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_experts: usize,
    pub n_active: usize,
    pub n_shared: usize,
    pub ffn_kind: Vec<FfnKind>,
    pub norm_kind: NormKind,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("d_model, n_layers, n_heads and d_ff must be positive".into());
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "n_heads ({}) must divide d_model ({})",
                self.n_heads, self.d_model
            ));
        }
        if self.n_experts == 0 {
            return fail("n_experts must be at least 1".into());
        }
        if self.n_active == 0 || self.n_active > self.n_experts {
            return fail(format!(
                "n_active must satisfy 1 <= n_active <= n_experts (got {} of {})",
                self.n_active, self.n_experts
            ));
        }
        if self.n_active + self.n_shared > self.n_experts {
            return fail(format!(
                "n_active + n_shared ({} + {}) exceeds n_experts ({})",
                self.n_active, self.n_shared, self.n_experts
            ));
        }
        if self.ffn_kind.len() != self.n_layers {
            return fail(format!(
                "ffn_kind has {} entries but n_layers is {}",
                self.ffn_kind.len(),
                self.n_layers
            ));
        }
        if self.ffn_kind.iter().all(|k| *k == FfnKind::Dense)
            && (self.n_experts != 1 || self.n_active != 1 || self.n_shared != 0)
        {
            return fail("a fully dense model requires n_experts = n_active = 1 and n_shared = 0".into());
        }
        Ok(())
    }

    /// `N_A / N`.
    pub fn routing_sparsity(&self) -> f64 {
        self.n_active as f64 / self.n_experts as f64
    }

    pub fn is_moe(&self, layer: usize) -> bool {
        self.ffn_kind.get(layer) == Some(&FfnKind::Moe)
    }

    pub fn experts_in_layer(&self, layer: usize) -> usize {
        if self.is_moe(layer) {
            self.n_experts
        } else {
            1
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Sixty-four experts with eight active, mirroring the OLMoE routing ratio.
    pub fn olmoe_toy() -> Self {
        Self {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ff: 32,
            vocab_size: 1024,
            n_experts: 64,
            n_active: 8,
            n_shared: 0,
            ffn_kind: vec![FfnKind::Moe; 4],
            norm_kind: NormKind::Rms,
            seed: 0,
        }
    }

    pub fn small_moe() -> Self {
        Self {
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 32,
            vocab_size: 1024,
            n_experts: 8,
            n_active: 2,
            n_shared: 0,
            ffn_kind: vec![FfnKind::Moe; 2],
            norm_kind: NormKind::Rms,
            seed: 0,
        }
    }

    pub fn small_dense() -> Self {
        Self {
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 32,
            vocab_size: 1024,
            n_experts: 1,
            n_active: 1,
            n_shared: 0,
            ffn_kind: vec![FfnKind::Dense; 2],
            norm_kind: NormKind::Rms,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "olmoe-toy" => Ok(Self::olmoe_toy()),
            "small-moe" => Ok(Self::small_moe()),
            "small-dense" => Ok(Self::small_dense()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected olmoe-toy, small-moe or small-dense)"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ModelConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["olmoe-toy", "small-moe", "small-dense"] {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(ModelConfig::olmoe_toy().routing_sparsity(), 0.125);
    }

    #[test]
    fn rejects_bad_expert_counts() {
        let mut c = ModelConfig::small_moe();
        c.n_shared = 7;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::small_moe();
        c.n_active = 9;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::small_dense();
        c.n_experts = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::small_moe();
        c.n_heads = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_has_exactly_the_documented_fields() {
        let v = serde_json::to_value(ModelConfig::small_moe()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "d_ff", "d_model", "ffn_kind", "n_active", "n_experts", "n_heads", "n_layers",
                "n_shared", "norm_kind", "seed", "vocab_size"
            ]
        );
        let mut extra = v.clone();
        extra["bogus"] = 1.into();
        assert!(serde_json::from_value::<ModelConfig>(extra).is_err());
    }
}
