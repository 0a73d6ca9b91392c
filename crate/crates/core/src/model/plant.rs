//! Planted-weight constructors used as ground-truth oracles.
//!
//! A handful of residual coordinates are reserved and kept clean through the
//! whole network: coordinate 0 holds the constant 1, coordinate 1 the constant
//! 2, and each plant owns a route coordinate and a concept coordinate that are
//! 2 on its trigger (resp. concept) tokens and 0 elsewhere. No unplanted reader
//! looks at reserved coordinates and no writer writes to them, so the planted
//! signal reaches every layer untouched.
//!
//! Planted rows are combinations of reserved coordinates whose coefficients sum
//! to zero, which makes them invariant to layernorm mean-centering.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::Weights;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const ONE: usize = 0;
const TWO: usize = 1;
const MARK: f32 = 2.0;

/// One planted monosemantic expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub layer: usize,
    pub expert: usize,
    /// Neuron `j` of the expert's hidden layer that carries the concept.
    pub neuron: usize,
    /// Tokens that route to the planted expert.
    pub trigger_tokens: Vec<u32>,
    /// Tokens on which neuron `j` fires; defaults to the trigger set.
    #[serde(default)]
    pub concept_tokens: Option<Vec<u32>>,
    /// Token promoted by the expert's output.
    pub promoted_token: u32,
}

impl PlantSpec {
    pub fn concept(&self) -> &[u32] {
        self.concept_tokens.as_deref().unwrap_or(&self.trigger_tokens)
    }
}

/// Magnitudes of the planted rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantGains {
    pub router: f32,
    pub gate: f32,
    pub up: f32,
    pub down: f32,
}

impl Default for PlantGains {
    fn default() -> Self {
        Self {
            router: 4.0,
            gate: 8.0,
            up: 2.0,
            down: 0.1,
        }
    }
}

pub fn plant_expert(config: &ModelConfig, spec: &PlantSpec) -> Result<Weights> {
    plant_experts(config, std::slice::from_ref(spec), PlantGains::default())
}

/// Seeded random weights with every spec in `specs` planted.
pub fn plant_experts(config: &ModelConfig, specs: &[PlantSpec], gains: PlantGains) -> Result<Weights> {
    config.validate()?;
    check_specs(config, specs)?;
    let reserved: Vec<usize> = (0..2 + 2 * specs.len()).collect();
    let mut w = Weights::random(config)?;
    isolate_reserved(&mut w, &reserved);

    for (p, spec) in specs.iter().enumerate() {
        let route = 2 + 2 * p;
        let concept = route + 1;
        for &t in &spec.trigger_tokens {
            w.embed.set(t as usize, route, MARK);
        }
        for &t in spec.concept() {
            w.embed.set(t as usize, concept, MARK);
        }
        let d = config.d_model;
        // 2*e_route - e_one - e_two: +1 on triggers, -3 elsewhere
        let selector = combo(d, &[(route, 2.0), (ONE, -1.0), (TWO, -1.0)]);
        // e_concept - 2*e_one + e_two: 2 on concept tokens, 0 elsewhere
        let detector = combo(d, &[(concept, 1.0), (ONE, -2.0), (TWO, 1.0)]);

        let layer = &mut w.layers[spec.layer];
        if let Some(router) = layer.router.as_mut() {
            router
                .row_mut(spec.expert)
                .iter_mut()
                .zip(&selector)
                .for_each(|(r, s)| *r = gains.router * s);
        }
        let expert = &mut layer.experts[spec.expert];
        expert.gate.data.fill(0.0);
        expert.up.data.fill(0.0);
        expert.down.data.fill(0.0);
        for c in 0..d {
            expert.gate.set(spec.neuron, c, gains.gate * selector[c]);
            expert.up.set(spec.neuron, c, gains.up * detector[c]);
        }
        let column = w.unembed.column(spec.promoted_token as usize);
        for (r, v) in column.iter().enumerate() {
            w.layers[spec.layer].experts[spec.expert].down.set(r, spec.neuron, gains.down * v);
        }
    }
    w.validate(config)?;
    Ok(w)
}

/// Dense control: the concept signal of one planted neuron is spread over
/// `width` neurons of a dense FFN by a random orthogonal rotation, mixed with
/// `width - 1` per-token Gaussian nuisance features.
pub fn plant_dense_smeared(
    config: &ModelConfig,
    layer: usize,
    concept_tokens: &[u32],
    width: usize,
    nuisance_scale: f32,
    seed: u64,
) -> Result<Weights> {
    config.validate()?;
    if layer >= config.n_layers || config.is_moe(layer) {
        return Err(Error::Config(format!("layer {layer} is not a dense layer")));
    }
    if width == 0 || width > config.d_ff {
        return Err(Error::Config(format!("smear width {width} must be in 1..={}", config.d_ff)));
    }
    let concept = 2;
    let nuisance: Vec<usize> = (3..3 + width - 1).collect();
    let reserved: Vec<usize> = (0..3 + width - 1).collect();
    if 2 * reserved.len() > config.d_model {
        return Err(Error::Config("d_model too small for the reserved coordinates".into()));
    }
    check_tokens(config, concept_tokens)?;
    let mut w = Weights::random(config)?;
    isolate_reserved(&mut w, &reserved);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &t in concept_tokens {
        w.embed.set(t as usize, concept, MARK);
    }
    for t in 0..config.vocab_size {
        for &c in &nuisance {
            let z: f64 = StandardNormal.sample(&mut rng);
            w.embed.set(t, c, z as f32);
        }
    }
    let d = config.d_model;
    let q = random_orthogonal(width, &mut rng);
    let mut sources = vec![combo(d, &[(concept, 1.0), (ONE, -2.0), (TWO, 1.0)])];
    for &c in &nuisance {
        // e_c - 2*e_one + e_two evaluates to the raw nuisance value
        sources.push(
            combo(d, &[(c, 1.0), (ONE, -2.0), (TWO, 1.0)])
                .into_iter()
                .map(|v| v * nuisance_scale)
                .collect(),
        );
    }
    let gains = PlantGains::default();
    let gate_row = combo(d, &[(TWO, 1.0), (ONE, -1.0)]);
    let ffn = &mut w.layers[layer].experts[0];
    ffn.gate.data.fill(0.0);
    ffn.up.data.fill(0.0);
    for i in 0..width {
        for c in 0..d {
            ffn.gate.set(i, c, gains.gate * gate_row[c]);
            let mixed: f64 = (0..width).map(|m| q[i][m] * sources[m][c] as f64).sum();
            ffn.up.set(i, c, gains.up * mixed as f32);
        }
    }
    w.validate(config)?;
    Ok(w)
}

fn combo(d: usize, terms: &[(usize, f32)]) -> Vec<f32> {
    let mut v = vec![0.0; d];
    for &(c, a) in terms {
        v[c] += a;
    }
    v
}

fn check_tokens(config: &ModelConfig, tokens: &[u32]) -> Result<()> {
    match tokens.iter().find(|&&t| t as usize >= config.vocab_size) {
        Some(t) => Err(Error::Config(format!(
            "token id {t} out of range (vocab_size {})",
            config.vocab_size
        ))),
        None => Ok(()),
    }
}

fn check_specs(config: &ModelConfig, specs: &[PlantSpec]) -> Result<()> {
    let reserved = 2 + 2 * specs.len();
    if 2 * reserved > config.d_model {
        return Err(Error::Config(format!(
            "{} plants need {reserved} reserved coordinates; d_model {} leaves too few free",
            specs.len(),
            config.d_model
        )));
    }
    let mut sites = HashSet::new();
    for spec in specs {
        let bad = |m: String| Err(Error::Config(format!("infeasible plant at layer {}: {m}", spec.layer)));
        if spec.layer >= config.n_layers {
            return bad(format!("model has {} layers", config.n_layers));
        }
        if spec.neuron >= config.d_ff {
            return bad(format!("neuron {} >= d_ff {}", spec.neuron, config.d_ff));
        }
        if spec.expert >= config.experts_in_layer(spec.layer) {
            return bad(format!("expert {} does not exist", spec.expert));
        }
        if config.is_moe(spec.layer) {
            if spec.expert < config.n_shared {
                return bad(format!("expert {} is a shared expert", spec.expert));
            }
            let plants_here = specs.iter().filter(|s| s.layer == spec.layer).count();
            if config.n_active + plants_here > config.n_experts - config.n_shared {
                return bad("too few unplanted experts to keep planted experts unselected".into());
            }
        }
        if spec.trigger_tokens.is_empty() {
            return bad("empty trigger set".into());
        }
        if !sites.insert((spec.layer, spec.expert)) {
            return bad(format!("expert {} planted twice", spec.expert));
        }
        check_tokens(config, &spec.trigger_tokens)?;
        check_tokens(config, spec.concept())?;
        check_tokens(config, &[spec.promoted_token])?;
    }
    Ok(())
}

/// Zero every reader column and writer row on the reserved coordinates, fix
/// the constant coordinates in the embedding and give the unembedding unit
/// columns.
fn isolate_reserved(w: &mut Weights, reserved: &[usize]) {
    let set: BTreeSet<usize> = reserved.iter().copied().collect();
    let zero_cols = |m: &mut Matrix| {
        for r in 0..m.rows {
            for &c in &set {
                m.set(r, c, 0.0);
            }
        }
    };
    let zero_rows = |m: &mut Matrix| {
        for &r in &set {
            m.row_mut(r).fill(0.0);
        }
    };
    for layer in &mut w.layers {
        zero_cols(&mut layer.attn.q);
        zero_cols(&mut layer.attn.k);
        zero_cols(&mut layer.attn.v);
        zero_rows(&mut layer.attn.o);
        if let Some(r) = layer.router.as_mut() {
            zero_cols(r);
        }
        for e in &mut layer.experts {
            zero_cols(&mut e.gate);
            zero_cols(&mut e.up);
            zero_rows(&mut e.down);
        }
    }
    zero_cols(&mut w.embed);
    for t in 0..w.embed.rows {
        w.embed.set(t, ONE, 1.0);
        w.embed.set(t, TWO, 2.0);
    }
    zero_rows(&mut w.unembed);
    for c in 0..w.unembed.cols {
        let norm = crate::linalg::l2_norm_f32(&w.unembed.column(c));
        if norm > 0.0 {
            for r in 0..w.unembed.rows {
                let v = w.unembed.get(r, c);
                w.unembed.set(r, c, (v as f64 / norm) as f32);
            }
        }
    }
}

/// Gram-Schmidt on a Gaussian matrix with a sign shuffle of the rows.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for u in &rows {
            let p = crate::linalg::dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = crate::linalg::dot(&v, &v).sqrt();
        if norm > 1e-8 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rows.shuffle(rng);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    fn spec() -> PlantSpec {
        PlantSpec {
            layer: 1,
            expert: 5,
            neuron: 3,
            trigger_tokens: vec![100, 101],
            concept_tokens: None,
            promoted_token: 700,
        }
    }

    #[test]
    fn trigger_gets_top_gate_and_non_trigger_is_unselected() {
        let config = ModelConfig::small_moe();
        let model = Model::new(config.clone(), plant_expert(&config, &spec()).unwrap()).unwrap();
        let trace = model.forward(&[7, 100, 9, 101, 300]).unwrap();
        for p in 0..5 {
            let pt = trace.at(1, p);
            let triggered = matches!(trace.tokens[p], 100 | 101);
            if triggered {
                let best = crate::linalg::top_k_indices(&pt.gates, 1)[0];
                assert_eq!(best, 5);
            } else {
                assert_eq!(pt.gate(5), 0.0);
            }
        }
    }

    #[test]
    fn only_the_planted_neuron_fires() {
        let config = ModelConfig::small_moe();
        let model = Model::new(config.clone(), plant_expert(&config, &spec()).unwrap()).unwrap();
        let trace = model.forward(&[100]).unwrap();
        let act = trace.at(1, 0).expert(5).unwrap();
        for (j, h) in act.hidden.iter().enumerate() {
            if j == 3 {
                assert!(*h > 1.0);
            } else {
                assert!(h.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lens_of_planted_update_ranks_promoted_token_first() {
        let config = ModelConfig::small_moe();
        let model = Model::new(config.clone(), plant_expert(&config, &spec()).unwrap()).unwrap();
        let trace = model.forward(&[3, 101]).unwrap();
        let act = trace.at(1, 1).expert(5).unwrap();
        let v: Vec<f64> = act.gated_output().iter().map(|x| *x as f64).collect();
        let logits = model.weights.unembed.vecmat_f64(&v);
        assert_eq!(crate::linalg::top_k_indices(&logits, 1)[0], 700);
    }

    #[test]
    fn planting_survives_layernorm() {
        let mut config = ModelConfig::small_moe();
        config.norm_kind = crate::model::NormKind::Layernorm;
        let model = Model::new(config.clone(), plant_expert(&config, &spec()).unwrap()).unwrap();
        let trace = model.forward(&[100, 8, 101]).unwrap();
        assert!(trace.at(1, 0).gate(5) > 0.9);
        assert_eq!(trace.at(1, 1).gate(5), 0.0);
        assert!(trace.at(1, 2).gate(5) > 0.9);
    }

    #[test]
    fn infeasible_specs_are_config_errors() {
        let config = ModelConfig::small_moe();
        let mut s = spec();
        s.neuron = config.d_ff;
        assert!(matches!(plant_expert(&config, &s), Err(Error::Config(_))));
        let mut s = spec();
        s.trigger_tokens = vec![5000];
        assert!(plant_expert(&config, &s).is_err());
        let mut c = config.clone();
        c.n_active = 8;
        assert!(plant_expert(&c, &spec()).is_err());
    }

    #[test]
    fn random_orthogonal_is_orthonormal() {
        let q = random_orthogonal(8, &mut ChaCha8Rng::seed_from_u64(3));
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((crate::linalg::dot(&q[i], &q[j]) - expect).abs() < 1e-12);
            }
        }
    }
}
