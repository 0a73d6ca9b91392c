use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// SwiGLU expert: `gate`, `up` are `d_ff x d`, `down` is `d x d_ff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertWeights {
    pub gate: Matrix,
    pub up: Matrix,
    pub down: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub o: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub attn: AttentionWeights,
    pub ffn_norm: Vec<f32>,
    /// `N x d`, present only on MoE layers.
    pub router: Option<Matrix>,
    pub experts: Vec<ExpertWeights>,
}

/// All parameters of the toy model.
///
/// `unembed` (`d x |V|`) is the only vocabulary projection in the toolkit;
/// logit lens, attribution and clustering all read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub embed: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    pub unembed: Matrix,
}

struct Init {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Init {
    fn new(seed: u64, std: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, std).expect("positive std"),
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| self.normal.sample(&mut self.rng) as f32)
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

impl Weights {
    /// Seeded Gaussian initialization with standard deviation `1/sqrt(d)`.
    pub fn random(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut init = Init::new(config.seed, 1.0 / (d as f64).sqrt());
        let embed = init.matrix(config.vocab_size, d);
        let layers = (0..config.n_layers)
            .map(|l| {
                let attn = AttentionWeights {
                    q: init.matrix(d, d),
                    k: init.matrix(d, d),
                    v: init.matrix(d, d),
                    o: init.matrix(d, d),
                };
                let router = config.is_moe(l).then(|| init.matrix(config.n_experts, d));
                let experts = (0..config.experts_in_layer(l))
                    .map(|_| ExpertWeights {
                        gate: init.matrix(config.d_ff, d),
                        up: init.matrix(config.d_ff, d),
                        down: init.matrix(d, config.d_ff),
                    })
                    .collect();
                LayerWeights {
                    attn_norm: vec![1.0; d],
                    attn,
                    ffn_norm: vec![1.0; d],
                    router,
                    experts,
                }
            })
            .collect();
        let unembed = init.matrix(d, config.vocab_size);
        Ok(Self {
            embed,
            layers,
            final_norm: vec![1.0; d],
            unembed,
        })
    }

    /// Zero everywhere except unit norm scales.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut w = Self::random(config)?;
        w.map_matrices(|_, m| m.data.iter_mut().for_each(|v| *v = 0.0));
        Ok(w)
    }

    fn map_matrices(&mut self, mut f: impl FnMut(&str, &mut Matrix)) {
        f("embed", &mut self.embed);
        for layer in &mut self.layers {
            f("q", &mut layer.attn.q);
            f("k", &mut layer.attn.k);
            f("v", &mut layer.attn.v);
            f("o", &mut layer.attn.o);
            if let Some(r) = layer.router.as_mut() {
                f("router", r);
            }
            for e in &mut layer.experts {
                f("gate", &mut e.gate);
                f("up", &mut e.up);
                f("down", &mut e.down);
            }
        }
        f("unembed", &mut self.unembed);
    }

    /// Named tensors in container order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out: Vec<(String, Vec<usize>, &[f32])> = Vec::new();
        fn push_m<'a>(name: String, m: &'a Matrix, out: &mut Vec<(String, Vec<usize>, &'a [f32])>) {
            out.push((name, vec![m.rows, m.cols], m.data.as_slice()))
        }
        push_m("embed".into(), &self.embed, &mut out);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((
                format!("layers.{l}.attn_norm"),
                vec![layer.attn_norm.len()],
                layer.attn_norm.as_slice(),
            ));
            push_m(format!("layers.{l}.attn.q"), &layer.attn.q, &mut out);
            push_m(format!("layers.{l}.attn.k"), &layer.attn.k, &mut out);
            push_m(format!("layers.{l}.attn.v"), &layer.attn.v, &mut out);
            push_m(format!("layers.{l}.attn.o"), &layer.attn.o, &mut out);
            out.push((
                format!("layers.{l}.ffn_norm"),
                vec![layer.ffn_norm.len()],
                layer.ffn_norm.as_slice(),
            ));
            if let Some(r) = &layer.router {
                push_m(format!("layers.{l}.router"), r, &mut out);
            }
            for (i, e) in layer.experts.iter().enumerate() {
                push_m(format!("layers.{l}.experts.{i}.gate"), &e.gate, &mut out);
                push_m(format!("layers.{l}.experts.{i}.up"), &e.up, &mut out);
                push_m(format!("layers.{l}.experts.{i}.down"), &e.down, &mut out);
            }
        }
        out.push(("final_norm".into(), vec![self.final_norm.len()], self.final_norm.as_slice()));
        push_m("unembed".into(), &self.unembed, &mut out);
        out
    }

    /// Rebuild from named tensors, checking every shape against `config`.
    pub fn from_named(
        config: &ModelConfig,
        tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut bag = TensorBag(tensors);
        let embed = bag.mat("embed", config.vocab_size, d)?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let attn_norm = bag.vec(&format!("layers.{l}.attn_norm"), d)?;
            let attn = AttentionWeights {
                q: bag.mat(&format!("layers.{l}.attn.q"), d, d)?,
                k: bag.mat(&format!("layers.{l}.attn.k"), d, d)?,
                v: bag.mat(&format!("layers.{l}.attn.v"), d, d)?,
                o: bag.mat(&format!("layers.{l}.attn.o"), d, d)?,
            };
            let ffn_norm = bag.vec(&format!("layers.{l}.ffn_norm"), d)?;
            let router = if config.is_moe(l) {
                Some(bag.mat(&format!("layers.{l}.router"), config.n_experts, d)?)
            } else {
                None
            };
            let mut experts = Vec::new();
            for i in 0..config.experts_in_layer(l) {
                experts.push(ExpertWeights {
                    gate: bag.mat(&format!("layers.{l}.experts.{i}.gate"), config.d_ff, d)?,
                    up: bag.mat(&format!("layers.{l}.experts.{i}.up"), config.d_ff, d)?,
                    down: bag.mat(&format!("layers.{l}.experts.{i}.down"), d, config.d_ff)?,
                });
            }
            layers.push(LayerWeights {
                attn_norm,
                attn,
                ffn_norm,
                router,
                experts,
            });
        }
        let final_norm = bag.vec("final_norm", d)?;
        let unembed = bag.mat("unembed", d, config.vocab_size)?;
        if let Some(extra) = bag.0.keys().next() {
            return Err(Error::Container(format!("unexpected tensor `{extra}`")));
        }
        let w = Self {
            embed,
            layers,
            final_norm,
            unembed,
        };
        w.validate(config)?;
        Ok(w)
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let d = config.d_model;
        let bad = |what: &str| Err(Error::Config(format!("weights inconsistent with config: {what}")));
        if self.embed.shape() != [config.vocab_size, d] || self.unembed.shape() != [d, config.vocab_size] {
            return bad("embedding shapes");
        }
        if self.layers.len() != config.n_layers || self.final_norm.len() != d {
            return bad("layer count or final norm");
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.experts.len() != config.experts_in_layer(l)
                || layer.router.is_some() != config.is_moe(l)
                || layer.attn_norm.len() != d
                || layer.ffn_norm.len() != d
            {
                return bad(&format!("layer {l} structure"));
            }
            for e in &layer.experts {
                if e.gate.shape() != [config.d_ff, d]
                    || e.up.shape() != [config.d_ff, d]
                    || e.down.shape() != [d, config.d_ff]
                {
                    return bad(&format!("layer {l} expert shapes"));
                }
            }
        }
        let finite = self.named_tensors().iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Data("weights contain non-finite values".into()));
        }
        Ok(())
    }
}

struct TensorBag(BTreeMap<String, (Vec<usize>, Vec<f32>)>);

impl TensorBag {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let (s, data) = self
            .0
            .remove(name)
            .ok_or_else(|| Error::Container(format!("missing tensor `{name}`")))?;
        if s != shape {
            return Err(Error::Config(format!(
                "tensor `{name}` has shape {s:?}, config expects {shape:?}"
            )));
        }
        Ok(data)
    }

    fn vec(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        self.take(name, &[len])
    }

    fn mat(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        Ok(Matrix::from_vec(rows, cols, self.take(name, &[rows, cols])?))
    }
}
