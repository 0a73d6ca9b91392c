//! The (concept, site, k) probe grid and best-site selection.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::activations::ActivationTable;
use super::probe::{evaluate_f1, fit_probe, rank_neurons, restrict, ProbeOptions, ProbeResult};
use super::Site;
use crate::corpus::{build_dataset, label_tokens, ClassCounts, Concept, ConceptDataset, Filtered, RoutedSite, TokenizedCorpus};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::protocol::{CONTEXT_TOKENS, K_VALUES, PROBE_SAMPLES};

pub const CI_METHOD: &str = "mean ± 1.96 * standard error over concepts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    /// `None` probes every site of the model.
    #[serde(default)]
    pub sites: Option<Vec<Site>>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_context")]
    pub context: usize,
    #[serde(default)]
    pub probe: ProbeOptions,
}

fn default_k_values() -> Vec<usize> {
    K_VALUES.to_vec()
}

fn default_samples() -> usize {
    PROBE_SAMPLES
}

fn default_context() -> usize {
    CONTEXT_TOKENS
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            k_values: default_k_values(),
            sites: None,
            n_samples: default_samples(),
            seed: 0,
            context: default_context(),
            probe: ProbeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub concept: String,
    pub site: Option<Site>,
    pub k: Option<usize>,
    pub reason: String,
    pub counts: Option<ClassCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Fitted(ProbeResult),
    Skipped(SkipRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSite {
    pub concept: String,
    pub k: usize,
    pub site: Site,
    pub test_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub k: usize,
    pub mean_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_concepts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub settings: SweepSettings,
    /// Every probe in (concept, site, k) order.
    pub grid: Vec<ProbeOutcome>,
    pub best: Vec<BestSite>,
}

/// Builds one dataset per concept, gathers activations once, then fits every
/// (concept, site, k) probe. Skips are recorded and the sweep continues.
pub fn run_sweep(
    model: &Model,
    corpus: &TokenizedCorpus,
    concepts: &[Concept],
    settings: &SweepSettings,
) -> Result<SweepResult> {
    use rayon::prelude::*;
    let config = &model.config;
    let mut sites = match &settings.sites {
        Some(s) => s.clone(),
        None => Site::all(config),
    };
    for s in &sites {
        s.validate(config)?;
    }
    sites.sort();
    sites.dedup();
    if settings.k_values.contains(&0) {
        return Err(Error::Config("k values must be positive".into()));
    }

    let mut grid = Vec::new();
    let mut datasets: Vec<ConceptDataset> = Vec::new();
    for concept in concepts {
        let labels = label_tokens(corpus, concept);
        match build_dataset(concept.name(), &labels, settings.n_samples, settings.seed) {
            Ok(ds) => datasets.push(ds),
            Err(Error::Dataset(reason)) => grid.push(ProbeOutcome::Skipped(SkipRecord {
                concept: concept.name().to_string(),
                site: None,
                k: None,
                reason,
                counts: None,
            })),
            Err(e) => return Err(e),
        }
    }
    let positions: BTreeSet<(usize, usize)> = datasets
        .iter()
        .flat_map(|d| d.samples.iter().map(|s| (s.doc, s.position)))
        .collect();
    let table = ActivationTable::collect(model, corpus, positions, settings.context)?;

    let tasks: Vec<(&ConceptDataset, Site)> = datasets
        .iter()
        .flat_map(|d| sites.iter().map(move |s| (d, *s)))
        .collect();
    let results: Vec<Vec<ProbeOutcome>> = tasks
        .par_iter()
        .map(|(ds, site)| probe_site(ds, *site, &table, settings, config.d_ff))
        .collect::<Result<_>>()?;
    grid.extend(results.into_iter().flatten());
    let best = best_sites(&grid);
    Ok(SweepResult {
        settings: settings.clone(),
        grid,
        best,
    })
}

fn probe_site(
    ds: &ConceptDataset,
    site: Site,
    table: &ActivationTable,
    settings: &SweepSettings,
    width: usize,
) -> Result<Vec<ProbeOutcome>> {
    let expert = site.expert_index();
    let skip = |k: Option<usize>, reason: String, counts: Option<ClassCounts>| {
        ProbeOutcome::Skipped(SkipRecord {
            concept: ds.concept.clone(),
            site: Some(site),
            k,
            reason,
            counts,
        })
    };
    let filtered;
    let ds = if site.expert.is_some() {
        let routed = RoutedSite {
            layer: site.layer,
            expert,
        };
        match ds.filter_routed(routed, |s| table.get(s.doc, s.position, site.layer, expert).is_some()) {
            Filtered::Kept(d) => {
                filtered = d;
                &filtered
            }
            Filtered::Skipped(counts) => {
                return Ok(vec![skip(None, "too few routed samples per class".into(), Some(counts))]);
            }
        }
    } else {
        ds
    };
    let hidden = |i: usize| -> Result<&[f32]> {
        let s = &ds.samples[i];
        table
            .get(s.doc, s.position, site.layer, expert)
            .map(|r| r.hidden.as_slice())
            .ok_or_else(|| Error::Data(format!("no activation for doc {} position {}", s.doc, s.position)))
    };
    let train: Vec<&[f32]> = ds.train.iter().map(|&i| hidden(i)).collect::<Result<_>>()?;
    let test: Vec<&[f32]> = ds.test.iter().map(|&i| hidden(i)).collect::<Result<_>>()?;
    let y_train: Vec<bool> = ds.train.iter().map(|&i| ds.samples[i].label).collect();
    let y_test: Vec<bool> = ds.test.iter().map(|&i| ds.samples[i].label).collect();
    let counts = ds.counts();
    let ranking = match rank_neurons(&train, &y_train) {
        Ok(r) => r,
        Err(Error::Dataset(reason)) => return Ok(vec![skip(None, reason, Some(counts))]),
        Err(e) => return Err(e),
    };
    let mut out = Vec::with_capacity(settings.k_values.len());
    for &k in &settings.k_values {
        if k > width {
            out.push(skip(Some(k), format!("k exceeds hidden width {width}"), Some(counts)));
            continue;
        }
        let selected = ranking.top(k).to_vec();
        let fit = match fit_probe(&train, &y_train, &selected, &settings.probe) {
            Ok(f) => f,
            Err(Error::Dataset(reason)) => {
                out.push(skip(Some(k), reason, Some(counts)));
                continue;
            }
            Err(e) => return Err(e),
        };
        let scores = match evaluate_f1(&fit.weights, fit.bias, &restrict(&test, &selected), &y_test, settings.probe.threshold) {
            Ok(s) => s,
            Err(Error::Evaluation(reason)) => {
                out.push(skip(Some(k), reason, Some(counts)));
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(ProbeOutcome::Fitted(ProbeResult {
            concept: ds.concept.clone(),
            site,
            k,
            selected,
            weights: fit.weights,
            bias: fit.bias,
            lambda: settings.probe.lambda.unwrap_or(1.0 / train.len() as f64),
            train_loss: fit.objective,
            converged: fit.converged,
            iterations: fit.iterations,
            test_f1: scores.f1,
            test_precision: scores.precision,
            test_recall: scores.recall,
            n_train: train.len(),
            n_test: test.len(),
            positive_ratio: counts.positive_ratio(),
        }));
    }
    Ok(out)
}

/// Highest test F1 per (concept, k); ties go to the lowest layer, then the
/// lowest expert.
fn best_sites(grid: &[ProbeOutcome]) -> Vec<BestSite> {
    let mut best: Vec<BestSite> = Vec::new();
    for r in grid.iter().filter_map(|o| match o {
        ProbeOutcome::Fitted(r) => Some(r),
        ProbeOutcome::Skipped(_) => None,
    }) {
        match best.iter_mut().find(|b| b.concept == r.concept && b.k == r.k) {
            Some(b) => {
                if r.test_f1 > b.test_f1 || (r.test_f1 == b.test_f1 && r.site < b.site) {
                    b.site = r.site;
                    b.test_f1 = r.test_f1;
                }
            }
            None => best.push(BestSite {
                concept: r.concept.clone(),
                k: r.k,
                site: r.site,
                test_f1: r.test_f1,
            }),
        }
    }
    best
}

impl SweepResult {
    pub fn fitted(&self) -> impl Iterator<Item = &ProbeResult> {
        self.grid.iter().filter_map(|o| match o {
            ProbeOutcome::Fitted(r) => Some(r),
            ProbeOutcome::Skipped(_) => None,
        })
    }

    pub fn best_for(&self, concept: &str, k: usize) -> Option<&BestSite> {
        self.best.iter().find(|b| b.concept == concept && b.k == k)
    }

    pub fn result_at(&self, concept: &str, site: Site, k: usize) -> Option<&ProbeResult> {
        self.fitted().find(|r| r.concept == concept && r.site == site && r.k == k)
    }

    /// Mean best-site F1 over concepts per k with a normal-approximation 95%
    /// interval.
    pub fn plot_series(&self) -> Vec<PlotPoint> {
        let mut out = Vec::new();
        for &k in &self.settings.k_values {
            let f1: Vec<f64> = self.best.iter().filter(|b| b.k == k).map(|b| b.test_f1).collect();
            if f1.is_empty() {
                continue;
            }
            let n = f1.len() as f64;
            let mean = f1.iter().sum::<f64>() / n;
            let half = if f1.len() > 1 {
                let var = f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            out.push(PlotPoint {
                k,
                mean_f1: mean,
                ci_low: mean - half,
                ci_high: mean + half,
                n_concepts: f1.len(),
            });
        }
        out
    }

    /// One row per grid entry.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "concept", "layer", "expert", "k", "status", "test_f1", "precision", "recall", "train_loss", "lambda",
            "n_train", "n_test", "positive_ratio", "converged", "selected", "reason",
        ])?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for o in &self.grid {
            match o {
                ProbeOutcome::Fitted(r) => w.write_record([
                    r.concept.clone(),
                    r.site.layer.to_string(),
                    opt(r.site.expert),
                    r.k.to_string(),
                    "fitted".into(),
                    format!("{:.6}", r.test_f1),
                    format!("{:.6}", r.test_precision),
                    format!("{:.6}", r.test_recall),
                    format!("{:.8}", r.train_loss),
                    format!("{:e}", r.lambda),
                    r.n_train.to_string(),
                    r.n_test.to_string(),
                    format!("{:.4}", r.positive_ratio),
                    r.converged.to_string(),
                    r.selected.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "),
                    String::new(),
                ])?,
                ProbeOutcome::Skipped(s) => w.write_record([
                    s.concept.clone(),
                    opt(s.site.map(|x| x.layer)),
                    opt(s.site.and_then(|x| x.expert)),
                    opt(s.k),
                    "skipped".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    s.counts.map(|c| format!("{:.4}", c.positive_ratio())).unwrap_or_default(),
                    String::new(),
                    String::new(),
                    s.reason.clone(),
                ])?,
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
