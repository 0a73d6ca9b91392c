//! Trigger-target experiment: does an expert routed on a trigger word push the
//! logit of the target word?

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::lens::{dla, expert_update};
use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::linalg::top_k_indices;
use crate::model::Model;

/// One prompt as stored in case files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerTargetCase {
    pub text: String,
    pub trigger: String,
    pub target: String,
}

/// The matched cases written for one expert of the analysed layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertCases {
    pub expert: usize,
    pub cases: Vec<TriggerTargetCase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Top1,
    Top8,
    Lower,
    NotRouted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub expert: usize,
    /// Expert whose cases this prompt was written for.
    pub case_owner: usize,
    pub case_index: usize,
    pub matched: bool,
    pub text: String,
    pub trigger: String,
    pub target: String,
    pub trigger_token: u32,
    pub trigger_position: usize,
    pub target_token: u32,
    /// Whether the target word occurs in the text; if not, the prediction
    /// position is the final token.
    pub target_inline: bool,
    pub prediction_position: usize,
    pub trigger_gate: f32,
    pub routed_at_trigger: bool,
    pub contribution: f64,
    /// 1-based rank of the expert's DLA among all experts of the layer.
    pub rank: usize,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseError {
    pub expert: usize,
    pub case_owner: usize,
    pub case_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub top1_pct: f64,
    pub top8_pct: f64,
    pub lower_pct: f64,
    pub not_routed_pct: f64,
    /// `rank_counts[r - 1]` cases had rank `r`.
    pub rank_counts: Vec<usize>,
}

impl Aggregate {
    fn of<'a>(reports: impl Iterator<Item = &'a CaseReport>, n_experts: usize) -> Self {
        let mut agg = Aggregate {
            rank_counts: vec![0; n_experts],
            ..Default::default()
        };
        let mut counts = [0usize; 4];
        for r in reports {
            agg.n += 1;
            agg.rank_counts[r.rank - 1] += 1;
            counts[match r.category {
                Category::Top1 => 0,
                Category::Top8 => 1,
                Category::Lower => 2,
                Category::NotRouted => 3,
            }] += 1;
        }
        let pct = |c: usize| if agg.n == 0 { 0.0 } else { 100.0 * c as f64 / agg.n as f64 };
        agg.top1_pct = pct(counts[0]);
        agg.top8_pct = pct(counts[1]);
        agg.lower_pct = pct(counts[2]);
        agg.not_routed_pct = pct(counts[3]);
        agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerTargetReport {
    pub layer: usize,
    pub prediction_convention: String,
    pub cases: Vec<CaseReport>,
    pub errors: Vec<CaseError>,
    pub matched: Aggregate,
    pub control: Aggregate,
}

pub const PREDICTION_CONVENTION: &str =
    "token before the target's first sub-token when the target occurs in the text, else the final token";

/// First whole-word occurrence of `word` in `text`, else the first occurrence.
fn find_word(text: &str, word: &str) -> Option<Range<usize>> {
    let word = word.trim();
    if word.is_empty() {
        return None;
    }
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let mut first = None;
    for (i, _) in text.match_indices(word) {
        let end = i + word.len();
        first.get_or_insert(i..end);
        if !is_word(text[..i].chars().next_back()) && !is_word(text[end..].chars().next()) {
            return Some(i..end);
        }
    }
    first
}

fn overlapping(offsets: &[Range<usize>], span: &Range<usize>) -> Vec<usize> {
    offsets
        .iter()
        .enumerate()
        .filter(|(_, r)| r.start < span.end && span.start < r.end)
        .map(|(i, _)| i)
        .collect()
}

fn run_case(
    model: &Model,
    tokenizer: &Tokenizer,
    layer: usize,
    expert: usize,
    case: &TriggerTargetCase,
) -> std::result::Result<CaseReport, String> {
    let (tokens, offsets) = tokenizer.encode_with_offsets(case.text.as_bytes());
    if tokens.is_empty() {
        return Err("empty text".into());
    }
    let trigger_span = find_word(&case.text, &case.trigger).ok_or("trigger not found in text")?;
    let trigger_positions = overlapping(&offsets, &trigger_span);
    let (target_token, prediction_position, target_inline) = match find_word(&case.text, &case.target) {
        Some(span) => {
            let first = *overlapping(&offsets, &span).first().ok_or("target has no tokens")?;
            if first == 0 {
                return Err("target is the first token; no preceding prediction position".into());
            }
            (tokens[first], first - 1, true)
        }
        None => {
            let ids = tokenizer.encode(format!(" {}", case.target.trim()).as_bytes());
            (*ids.first().ok_or("empty target")?, tokens.len() - 1, false)
        }
    };
    let trace = model.forward(&tokens).map_err(|e| e.to_string())?;
    let gate_at = |p: usize| trace.at(layer, p).gate(expert);
    // highest gate among the trigger's sub-tokens, first one on ties
    let trigger_position = trigger_positions
        .iter()
        .copied()
        .fold(None, |best: Option<usize>, p| match best {
            Some(b) if gate_at(b) >= gate_at(p) => Some(b),
            _ => Some(p),
        })
        .ok_or("trigger has no tokens")?;
    let trigger_gate = gate_at(trigger_position);
    let final_residual = &trace.final_residual[prediction_position];
    let scores: Vec<f64> = (0..model.config.experts_in_layer(layer))
        .map(|e| {
            let v = expert_update(&trace, layer, e, prediction_position);
            dla(model, &v, final_residual, target_token)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let order = top_k_indices(&scores, scores.len());
    let rank = order.iter().position(|&e| e == expert).expect("expert in order") + 1;
    let routed_at_trigger = trigger_gate > 0.0;
    let category = match (routed_at_trigger, rank) {
        (false, _) => Category::NotRouted,
        (true, 1) => Category::Top1,
        (true, r) if r <= 8 => Category::Top8,
        _ => Category::Lower,
    };
    Ok(CaseReport {
        expert,
        case_owner: expert,
        case_index: 0,
        matched: true,
        text: case.text.clone(),
        trigger: case.trigger.clone(),
        target: case.target.clone(),
        trigger_token: tokens[trigger_position],
        trigger_position,
        target_token,
        target_inline,
        prediction_position,
        trigger_gate,
        routed_at_trigger,
        contribution: scores[expert],
        rank,
        category,
    })
}

/// Evaluates every expert on its own cases (matched) and on the cases of the
/// other listed experts of the same layer (control).
pub fn run_trigger_target(
    model: &Model,
    tokenizer: &Tokenizer,
    layer: usize,
    experts: &[ExpertCases],
) -> Result<TriggerTargetReport> {
    use rayon::prelude::*;
    if layer >= model.config.n_layers {
        return Err(Error::Config(format!("layer {layer} out of range")));
    }
    if experts.iter().all(|e| e.cases.is_empty()) {
        return Err(Error::Config("no trigger-target cases given".into()));
    }
    let n = model.config.experts_in_layer(layer);
    if let Some(e) = experts.iter().find(|e| e.expert >= n) {
        return Err(Error::Config(format!("expert {} out of range at layer {layer}", e.expert)));
    }
    let jobs: Vec<(usize, usize, usize, &TriggerTargetCase)> = experts
        .iter()
        .flat_map(|target| {
            experts.iter().flat_map(move |owner| {
                owner
                    .cases
                    .iter()
                    .enumerate()
                    .map(move |(i, c)| (target.expert, owner.expert, i, c))
            })
        })
        .collect();
    let outcomes: Vec<std::result::Result<CaseReport, CaseError>> = jobs
        .par_iter()
        .map(|&(expert, owner, index, case)| {
            run_case(model, tokenizer, layer, expert, case)
                .map(|r| CaseReport {
                    case_owner: owner,
                    case_index: index,
                    matched: owner == expert,
                    ..r
                })
                .map_err(|message| CaseError {
                    expert,
                    case_owner: owner,
                    case_index: index,
                    message,
                })
        })
        .collect();
    let mut cases = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => cases.push(r),
            Err(e) => {
                tracing::warn!(expert = e.expert, case = e.case_index, "{}", e.message);
                errors.push(e);
            }
        }
    }
    let matched = Aggregate::of(cases.iter().filter(|r| r.matched), n);
    let control = Aggregate::of(cases.iter().filter(|r| !r.matched), n);
    Ok(TriggerTargetReport {
        layer,
        prediction_convention: PREDICTION_CONVENTION.into(),
        cases,
        errors,
        matched,
        control,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_words_are_preferred() {
        assert_eq!(find_word("scatter cat", "cat"), Some(8..11));
        assert_eq!(find_word("scatter", "cat"), Some(1..4));
        assert_eq!(find_word("dog", "cat"), None);
    }
}
