//! Explainer and scorer orchestration, label scoring and label outputs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::llm::{replay_verdicts, unix_millis, ChatRequest, LlmClient, Message, Stage, TranscriptEntry, TranscriptStore};
use super::mining::{select_negatives, ExpertPool, MiningResult};
use super::prompts::{build_explainer_prompt, build_reprompt, build_scorer_prompt, extract_hypothesis, parse_verdicts};
use super::templates::PromptTemplates;
use crate::error::{Error, Result};
use crate::linalg::derive_seed;
use crate::probing::BinaryScores;
use crate::protocol::LLM_IN_FLIGHT;

/// F1 of the positive class of `verdicts` against the hidden key.
pub fn score_label(verdicts: &[bool], answer_key: &[bool]) -> Result<BinaryScores> {
    if verdicts.len() != answer_key.len() {
        return Err(Error::Evaluation(format!(
            "{} verdicts for {} presented examples",
            verdicts.len(),
            answer_key.len()
        )));
    }
    BinaryScores::from_predictions(verdicts, answer_key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Labeled,
    /// Too few mined examples.
    Unlabelable,
    /// Not enough held-back examples among peers.
    InsufficientNegatives,
    /// Scorer reply unusable after one re-prompt; excluded from F1 means.
    ParseFailure,
    EndpointFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub layer: usize,
    pub expert: usize,
    pub status: LabelStatus,
    pub message: Option<String>,
    pub hypothesis: Option<String>,
    pub explainer_examples: Vec<String>,
    pub scorer_positives: Vec<String>,
    pub scorer_negatives: Vec<String>,
    /// Example ids in the order shown to the scorer.
    pub presented: Vec<String>,
    pub answer_key: Vec<bool>,
    pub verdicts: Option<Vec<bool>>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Endpoint id; call timestamps live in the transcript.
    pub endpoint: String,
}

impl LabelRecord {
    fn new(pool: &ExpertPool, endpoint: String) -> Self {
        Self {
            layer: pool.layer,
            expert: pool.expert,
            status: LabelStatus::Labeled,
            message: None,
            hypothesis: None,
            explainer_examples: vec![],
            scorer_positives: vec![],
            scorer_negatives: vec![],
            presented: vec![],
            answer_key: vec![],
            verdicts: None,
            precision: None,
            recall: None,
            f1: None,
            endpoint,
        }
    }

    fn fail(mut self, status: LabelStatus, message: String) -> Self {
        tracing::warn!(layer = self.layer, expert = self.expert, ?status, "{message}");
        self.status = status;
        self.message = Some(message);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSettings {
    pub seed: u64,
    pub in_flight: usize,
}

impl Default for LabelSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            in_flight: LLM_IN_FLIGHT,
        }
    }
}

struct Caller<'a> {
    client: &'a dyn LlmClient,
    store: &'a TranscriptStore,
    layer: usize,
    expert: usize,
}

impl Caller<'_> {
    fn call(&self, stage: Stage, messages: Vec<Message>, key: Option<&[bool]>) -> Result<String> {
        let request = ChatRequest {
            model: self.client.model(),
            messages,
            temperature: self.client.temperature(),
        };
        let started_ms = unix_millis();
        let outcome = self.client.complete(&request, key);
        self.store.record(TranscriptEntry {
            layer: self.layer,
            expert: self.expert,
            stage,
            endpoint: self.client.id(),
            request,
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
            answer_key: key.map(<[bool]>::to_vec),
            started_ms,
            finished_ms: unix_millis(),
        })?;
        outcome
    }
}

fn check_disjoint(record: &LabelRecord) -> Result<()> {
    let mut all: Vec<&String> = record
        .explainer_examples
        .iter()
        .chain(&record.scorer_positives)
        .chain(&record.scorer_negatives)
        .collect();
    let n = all.len();
    all.sort();
    all.dedup();
    if all.len() != n {
        return Err(Error::Data(format!(
            "example sets of L{}E{} overlap",
            record.layer, record.expert
        )));
    }
    Ok(())
}

fn label_one(
    pool: &ExpertPool,
    mining: &MiningResult,
    client: &dyn LlmClient,
    templates: &PromptTemplates,
    store: &TranscriptStore,
    seed: u64,
) -> Result<LabelRecord> {
    let mut record = LabelRecord::new(pool, client.id());
    if let Some(reason) = &pool.unlabelable {
        return Ok(record.fail(LabelStatus::Unlabelable, reason.clone()));
    }
    let settings = &mining.settings;
    let caller = Caller {
        client,
        store,
        layer: pool.layer,
        expert: pool.expert,
    };
    let positives = pool.positive_examples();
    let negatives = match select_negatives(&mining.pools, pool.layer, pool.expert, positives.len(), seed) {
        Ok(n) => n,
        Err(e) => return Ok(record.fail(LabelStatus::InsufficientNegatives, e.to_string())),
    };
    record.explainer_examples = pool.explainer_examples().iter().map(|e| e.id.clone()).collect();
    record.scorer_positives = positives.iter().map(|e| e.id.clone()).collect();
    record.scorer_negatives = negatives.iter().map(|e| e.id.clone()).collect();
    check_disjoint(&record)?;

    let explainer = build_explainer_prompt(templates, pool, settings.explainer)?;
    let reply = match caller.call(
        Stage::Explainer,
        vec![Message::system(explainer.system), Message::user(explainer.user)],
        None,
    ) {
        Ok(r) => r,
        Err(e) => return Ok(record.fail(LabelStatus::EndpointFailure, e.to_string())),
    };
    let hypothesis = match extract_hypothesis(&reply) {
        Ok(h) => h,
        Err(e) => return Ok(record.fail(LabelStatus::ParseFailure, e.to_string())),
    };
    record.hypothesis = Some(hypothesis.clone());

    let scorer_seed = derive_seed(seed, &[pool.layer as u64, pool.expert as u64, 3]);
    let scorer = build_scorer_prompt(templates, &hypothesis, &positives, &negatives, scorer_seed)?;
    record.presented = scorer.order.clone();
    record.answer_key = scorer.answer_key.clone();
    let n = scorer.answer_key.len();
    let mut messages = vec![Message::system(scorer.prompt.system), Message::user(scorer.prompt.user)];
    let first = match caller.call(Stage::Scorer, messages.clone(), Some(&scorer.answer_key)) {
        Ok(r) => r,
        Err(e) => return Ok(record.fail(LabelStatus::EndpointFailure, e.to_string())),
    };
    let verdicts = match parse_verdicts(&first, n) {
        Ok(v) => v,
        Err(_) => {
            messages.push(Message::assistant(first));
            messages.push(Message::user(build_reprompt(templates, n)?));
            let second = match caller.call(Stage::ScorerRetry, messages, Some(&scorer.answer_key)) {
                Ok(r) => r,
                Err(e) => return Ok(record.fail(LabelStatus::EndpointFailure, e.to_string())),
            };
            match parse_verdicts(&second, n) {
                Ok(v) => v,
                Err(e) => return Ok(record.fail(LabelStatus::ParseFailure, e.to_string())),
            }
        }
    };
    let scores = score_label(&verdicts, &scorer.answer_key)?;
    record.verdicts = Some(verdicts);
    record.precision = Some(scores.precision);
    record.recall = Some(scores.recall);
    record.f1 = Some(scores.f1);
    Ok(record)
}

/// Labels every mined expert. At most `in_flight` experts talk to the endpoint
/// at once; each expert's explainer call precedes its scorer call.
pub fn label_experts(
    mining: &MiningResult,
    client: &dyn LlmClient,
    templates: &PromptTemplates,
    store: &TranscriptStore,
    settings: &LabelSettings,
) -> Result<Vec<LabelRecord>> {
    if settings.in_flight == 0 {
        return Err(Error::Config("in_flight must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.in_flight)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        mining
            .pools
            .par_iter()
            .map(|p| label_one(p, mining, client, templates, store, settings.seed))
            .collect()
    })
}

/// Recomputes F1 for every record from the transcript alone.
pub fn replay_f1(entries: &[TranscriptEntry], records: &[LabelRecord]) -> Vec<Option<f64>> {
    records
        .iter()
        .map(|r| {
            let (verdicts, key) = replay_verdicts(entries, r.layer, r.expert)?;
            score_label(&verdicts, &key).ok().map(|s| s.f1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLayerPoint {
    pub layer: usize,
    /// Mean F1 over labelled experts (parse failures excluded).
    pub mean_f1: Option<f64>,
    pub labeled: usize,
    pub experts: usize,
    pub coverage: f64,
}

pub fn layer_series(records: &[LabelRecord]) -> Vec<LabelLayerPoint> {
    let mut layers: Vec<usize> = records.iter().map(|r| r.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    layers
        .into_iter()
        .map(|layer| {
            let all: Vec<&LabelRecord> = records.iter().filter(|r| r.layer == layer).collect();
            let f1s: Vec<f64> = all.iter().filter_map(|r| r.f1).collect();
            LabelLayerPoint {
                layer,
                mean_f1: (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64),
                labeled: f1s.len(),
                experts: all.len(),
                coverage: f1s.len() as f64 / all.len() as f64,
            }
        })
        .collect()
}

pub fn write_labels_csv(records: &[LabelRecord], path: &Path) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["expert", "layer", "hypothesis", "precision", "recall", "f1", "status"])
        .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let status = serde_json::to_value(r.status)?;
        w.write_record([
            r.expert.to_string(),
            r.layer.to_string(),
            r.hypothesis.clone().unwrap_or_default(),
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            status.as_str().unwrap_or_default().to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_f1_values() {
        let key: Vec<bool> = (0..20).map(|i| i < 10).collect();
        assert_eq!(score_label(&key, &key).unwrap().f1, 1.0);
        let all = score_label(&[true; 20], &key).unwrap();
        assert_eq!((all.precision, all.recall), (0.5, 1.0));
        assert!((all.f1 - 2.0 / 3.0).abs() < 1e-15);
        let low: Vec<bool> = (0..20).map(|i| i < 3).collect();
        let s = score_label(&low, &key).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.3));
        assert!((s.f1 - 0.6 / 1.3).abs() < 1e-15);
        assert!(matches!(score_label(&[true], &key), Err(Error::Evaluation(_))));
    }
}
