//! Example mining: one random window per document, scored per expert by its
//! sequence score, top examples kept and partitioned.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{expert_contribution, expert_update, logit_lens};
use crate::corpus::{TokenizedCorpus, Tokenizer};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, top_k_indices};
use crate::model::{ForwardTrace, Model};
use crate::protocol::{
    EXPLAINER_EXAMPLES, HELD_BACK_EXAMPLES, MINING_BUDGET_TOKENS, PROMOTED_TOKENS, SCORER_POSITIVES, TOP_ACTIVATIONS,
    TOP_EXAMPLES, WINDOW_TOKENS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSettings {
    pub window: usize,
    pub budget_tokens: usize,
    pub top: usize,
    pub explainer: usize,
    pub scorer_positive: usize,
    pub held_back: usize,
    pub promoted: usize,
    pub items: usize,
    pub seed: u64,
}

impl Default for MiningSettings {
    fn default() -> Self {
        Self {
            window: WINDOW_TOKENS,
            budget_tokens: MINING_BUDGET_TOKENS,
            top: TOP_EXAMPLES,
            explainer: EXPLAINER_EXAMPLES,
            scorer_positive: SCORER_POSITIVES,
            held_back: HELD_BACK_EXAMPLES,
            promoted: PROMOTED_TOKENS,
            items: TOP_ACTIVATIONS,
            seed: 0,
        }
    }
}

impl MiningSettings {
    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.explainer + self.scorer_positive + self.held_back != self.top {
            return Err(Error::Config(format!(
                "partition {} + {} + {} does not add up to top = {}",
                self.explainer, self.scorer_positive, self.held_back, self.top
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationItem {
    pub position: usize,
    pub token_str: String,
    pub score: f64,
    pub promoted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedExample {
    /// `L{layer}E{expert}-d{doc}-p{start}`.
    pub id: String,
    pub layer: usize,
    pub expert: usize,
    pub doc: usize,
    pub start: usize,
    pub tokens: Vec<u32>,
    pub token_strs: Vec<String>,
    pub routed: Vec<bool>,
    pub contributions: Vec<f64>,
    pub sequence_score: f64,
    pub top_activations: Vec<ActivationItem>,
}

impl MinedExample {
    /// The window text with routed tokens wrapped in `**`.
    pub fn snippet(&self) -> String {
        let mut s = String::new();
        for (t, &r) in self.token_strs.iter().zip(&self.routed) {
            if r {
                s.push_str("**");
                s.push_str(t);
                s.push_str("**");
            } else {
                s.push_str(t);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPool {
    pub layer: usize,
    pub expert: usize,
    /// Retained examples by descending sequence score.
    pub examples: Vec<MinedExample>,
    /// Indices into `examples`.
    pub explainer: Vec<usize>,
    pub scorer_positive: Vec<usize>,
    /// Served to peers of the same layer as scorer negatives.
    pub held_back: Vec<usize>,
    /// Reason the expert cannot be labelled, if any.
    pub unlabelable: Option<String>,
}

impl ExpertPool {
    pub fn explainer_examples(&self) -> Vec<&MinedExample> {
        self.explainer.iter().map(|&i| &self.examples[i]).collect()
    }

    pub fn positive_examples(&self) -> Vec<&MinedExample> {
        self.scorer_positive.iter().map(|&i| &self.examples[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub settings: MiningSettings,
    pub windows: usize,
    pub tokens_processed: usize,
    pub skipped_short_docs: usize,
    pub pools: Vec<ExpertPool>,
}

impl MiningResult {
    pub fn pool(&self, layer: usize, expert: usize) -> Option<&ExpertPool> {
        self.pools.iter().find(|p| p.layer == layer && p.expert == expert)
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    doc: usize,
    start: usize,
}

fn choose_windows(corpus: &TokenizedCorpus, s: &MiningSettings) -> (Vec<Window>, usize) {
    let mut windows = Vec::new();
    let mut skipped = 0;
    for (doc, tokens) in corpus.documents.iter().enumerate() {
        if (windows.len() + 1) * s.window > s.budget_tokens {
            break;
        }
        if tokens.len() < s.window {
            skipped += 1;
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, &[doc as u64]));
        let start = rng.random_range(0..=tokens.len() - s.window);
        windows.push(Window { doc, start });
    }
    (windows, skipped)
}

fn build_example(
    model: &Model,
    tokenizer: &Tokenizer,
    trace: &ForwardTrace,
    window: Window,
    layer: usize,
    expert: usize,
    s: &MiningSettings,
) -> MinedExample {
    let n = trace.len();
    let contributions: Vec<f64> = (0..n).map(|p| expert_contribution(trace, layer, expert, p)).collect();
    let routed: Vec<bool> = (0..n).map(|p| trace.at(layer, p).gate(expert) > 0.0).collect();
    let sequence_score = contributions.iter().copied().fold(0.0, f64::max);
    let top_activations = top_k_indices(&contributions, s.items)
        .into_iter()
        .filter(|&p| routed[p])
        .map(|p| {
            let v = expert_update(trace, layer, expert, p);
            ActivationItem {
                position: p,
                token_str: tokenizer.token_str(trace.tokens[p]),
                score: contributions[p],
                promoted: logit_lens(model, &v, s.promoted)
                    .top
                    .into_iter()
                    .map(|(t, _)| tokenizer.token_str(t))
                    .collect(),
            }
        })
        .collect();
    MinedExample {
        id: format!("L{layer}E{expert}-d{}-p{}", window.doc, window.start),
        layer,
        expert,
        doc: window.doc,
        start: window.start,
        tokens: trace.tokens.clone(),
        token_strs: trace.tokens.iter().map(|t| tokenizer.token_str(*t)).collect(),
        routed,
        contributions,
        sequence_score,
        top_activations,
    }
}

/// Mines example pools for `experts` (all experts of all layers when `None`).
pub fn mine_examples(
    model: &Model,
    tokenizer: &Tokenizer,
    corpus: &TokenizedCorpus,
    experts: Option<&[(usize, usize)]>,
    settings: &MiningSettings,
) -> Result<MiningResult> {
    settings.validate()?;
    let config = &model.config;
    let sites: Vec<(usize, usize)> = match experts {
        Some(list) => {
            for &(l, e) in list {
                if l >= config.n_layers || e >= config.experts_in_layer(l) {
                    return Err(Error::Config(format!("no expert {e} in layer {l}")));
                }
            }
            list.to_vec()
        }
        None => (0..config.n_layers)
            .flat_map(|l| (0..config.experts_in_layer(l)).map(move |e| (l, e)))
            .collect(),
    };
    let (windows, skipped_short_docs) = choose_windows(corpus, settings);
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "no document has {} tokens within the budget of {}",
            settings.window, settings.budget_tokens
        )));
    }
    let tokens_of = |w: Window| &corpus.documents[w.doc][w.start..w.start + settings.window];

    // first pass: sequence scores only
    let scores: Vec<Vec<f64>> = windows
        .par_iter()
        .map(|&w| {
            let trace = model.forward(tokens_of(w))?;
            Ok(sites
                .iter()
                .map(|&(l, e)| (0..trace.len()).map(|p| expert_contribution(&trace, l, e, p)).fold(0.0, f64::max))
                .collect())
        })
        .collect::<Result<_>>()?;
    let retained: Vec<Vec<usize>> = (0..sites.len())
        .map(|s| {
            let column: Vec<f64> = scores.iter().map(|row| row[s]).collect();
            top_k_indices(&column, settings.top)
                .into_iter()
                .filter(|&w| column[w] > 0.0)
                .collect()
        })
        .collect();

    // second pass: full examples for retained windows
    let mut needed: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (s, ws) in retained.iter().enumerate() {
        for &w in ws {
            needed.entry(w).or_default().push(s);
        }
    }
    let needed: Vec<(usize, Vec<usize>)> = needed.into_iter().collect();
    let built: Vec<Vec<((usize, usize), MinedExample)>> = needed
        .par_iter()
        .map(|(w, site_ids)| {
            let trace = model.forward(tokens_of(windows[*w]))?;
            Ok(site_ids
                .iter()
                .map(|&s| {
                    let (l, e) = sites[s];
                    ((s, *w), build_example(model, tokenizer, &trace, windows[*w], l, e, settings))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut examples: BTreeMap<(usize, usize), MinedExample> = built.into_iter().flatten().collect();

    let pools = sites
        .iter()
        .enumerate()
        .map(|(s, &(layer, expert))| {
            let examples: Vec<MinedExample> = retained[s]
                .iter()
                .map(|&w| examples.remove(&(s, w)).expect("built"))
                .collect();
            let mut pool = ExpertPool {
                layer,
                expert,
                explainer: vec![],
                scorer_positive: vec![],
                held_back: vec![],
                unlabelable: None,
                examples,
            };
            if pool.examples.len() < settings.top {
                let reason = format!("only {} scored windows, need {}", pool.examples.len(), settings.top);
                tracing::warn!(layer, expert, "{reason}");
                pool.unlabelable = Some(reason);
            } else {
                let mut order: Vec<usize> = (0..pool.examples.len()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[layer as u64, expert as u64, 1]));
                order.shuffle(&mut rng);
                let (a, rest) = order.split_at(settings.explainer);
                let (b, c) = rest.split_at(settings.scorer_positive);
                pool.explainer = a.to_vec();
                pool.scorer_positive = b.to_vec();
                pool.held_back = c.to_vec();
            }
            pool
        })
        .collect();
    Ok(MiningResult {
        settings: *settings,
        windows: windows.len(),
        tokens_processed: windows.len() * settings.window,
        skipped_short_docs,
        pools,
    })
}

/// Scorer negatives for one expert: a seeded sample of the held-back examples
/// of the other experts in the same layer.
pub fn select_negatives<'a>(
    pools: &'a [ExpertPool],
    layer: usize,
    expert: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<&'a MinedExample>> {
    let mut candidates: Vec<&MinedExample> = pools
        .iter()
        .filter(|p| p.layer == layer && p.expert != expert)
        .flat_map(|p| p.held_back.iter().map(move |&i| &p.examples[i]))
        .collect();
    if candidates.len() < n {
        return Err(Error::Data(format!(
            "layer {layer} offers {} negatives for expert {expert}, need {n}",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[layer as u64, expert as u64, 2]));
    candidates.shuffle(&mut rng);
    candidates.truncate(n);
    Ok(candidates)
}
