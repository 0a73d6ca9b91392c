use std::path::PathBuf;

use clap::Args;
use expertscope::protocol::{CLUSTER_KS, CONTEXT_TOKENS, FUNCTIONAL_TOP_N, MC_SAMPLES, SPECIALIZATION_BUDGET_TOKENS};
use expertscope::specialization::{
    cluster_unembedding, specialization_report, write_scores_csv, DistributionKind, LayerTokenCounts,
    SpecializationParams, SpecializationReport,
};
use expertscope::{Error, Result};
use serde::{Deserialize, Serialize};

use super::merge;
use crate::inputs;
use crate::manifest::Recorder;

#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecializeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Cluster counts (comma separated). Without this flag the preset list is
    /// used and entries larger than the vocabulary are skipped.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// routing, functional or both (comma separated).
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<DistributionKind>>,
    /// Layers to score; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Corpus tokens to trace.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    context: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Promoted tokens counted per routed position (functional kind).
    #[arg(long)]
    n_top: Option<usize>,
    /// Weight experts by token count when forming the layer base rate.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    token_weighted: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Effective<'a> {
    model: &'a PathBuf,
    corpus: &'a Option<PathBuf>,
    tokenizer: &'a Option<PathBuf>,
    k: &'a [usize],
    kinds: &'a [DistributionKind],
    layers: &'a [usize],
    budget: usize,
    context: usize,
    n_top: usize,
    params: SpecializationParams,
}

pub fn run(flags: SpecializeArgs) -> Result<()> {
    let mut args: SpecializeArgs = inputs::config_file(flags.config.as_deref())?;
    merge!(flags, args; model, corpus, tokenizer, k, kinds, layers, budget, context, mc_samples, seed, n_top, token_weighted, out);
    let model_dir = inputs::required(args.model.clone(), "--model")?;
    let out = inputs::required(args.out.clone(), "--out")?;
    let config = expertscope::ModelConfig::load(&model_dir.join("config.json"))?;
    let vocab = config.vocab_size;
    let mut skipped_k = Vec::new();
    let ks: Vec<usize> = match &args.k {
        Some(ks) => {
            if let Some(k) = ks.iter().find(|k| **k > vocab || **k == 0) {
                return Err(Error::Config(format!("k = {k} must be in 1..={vocab} (vocabulary size)")));
            }
            ks.clone()
        }
        None => CLUSTER_KS
            .iter()
            .copied()
            .filter(|&k| {
                let keep = k <= vocab;
                if !keep {
                    skipped_k.push(k);
                }
                keep
            })
            .collect(),
    };
    let kinds = args.kinds.clone().unwrap_or(vec![DistributionKind::Routing, DistributionKind::Functional]);
    let layers = args.layers.clone().unwrap_or((0..config.n_layers).collect());
    if let Some(l) = layers.iter().find(|l| **l >= config.n_layers) {
        return Err(Error::Config(format!("layer {l} out of range")));
    }
    let params = SpecializationParams {
        mc_samples: args.mc_samples.unwrap_or(MC_SAMPLES),
        seed: args.seed.unwrap_or(0),
        token_weighted_base_rate: args.token_weighted.unwrap_or(false),
    };
    let budget = args.budget.unwrap_or(SPECIALIZATION_BUDGET_TOKENS);
    let context = args.context.unwrap_or(CONTEXT_TOKENS);
    let n_top = args.n_top.unwrap_or(FUNCTIONAL_TOP_N);
    let effective = Effective {
        model: &model_dir,
        corpus: &args.corpus,
        tokenizer: &args.tokenizer,
        k: &ks,
        kinds: &kinds,
        layers: &layers,
        budget,
        context,
        n_top,
        params,
    };
    let mut rec = Recorder::new("specialize", &effective, &out)?;
    rec.seed("clusters_and_baseline", params.seed);
    for k in skipped_k {
        rec.note(format!("preset k = {k} exceeds the vocabulary of {vocab} and was skipped"));
    }
    rec.stage("load");
    let model = inputs::model(&model_dir, &mut rec)?;
    let tokenizer = inputs::tokenizer(args.tokenizer.as_deref(), &mut rec)?;
    inputs::check_vocab(&model, &tokenizer)?;
    let corpus = inputs::corpus(args.corpus.as_deref(), &tokenizer, &mut rec)?;

    rec.stage("cluster");
    let mut maps = Vec::new();
    for &k in &ks {
        let map = cluster_unembedding(&model.weights.unembed, k, params.seed)?;
        if !map.empty_clusters.is_empty() {
            rec.note(format!("k = {k}: {} empty cluster(s)", map.empty_clusters.len()));
        }
        std::fs::create_dir_all(rec.path("clusters")).map_err(|e| Error::io(rec.path("clusters"), e))?;
        map.save(&rec.path("clusters"), &format!("k{k}"))?;
        rec.output(&format!("clusters/k{k}.json"))?;
        rec.output(&format!("clusters/k{k}.centroids.bin"))?;
        maps.push(map);
    }

    rec.stage("trace");
    let mut counts = Vec::new();
    for &layer in &layers {
        for &kind in &kinds {
            counts.push(LayerTokenCounts::collect(&model, &corpus, layer, kind, budget, context, n_top)?);
        }
    }

    rec.stage("score");
    let mut reports: Vec<SpecializationReport> = Vec::new();
    for map in &maps {
        for c in &counts {
            let dists = (0..c.counts.len())
                .map(|e| c.distribution(e, map))
                .collect::<Result<Vec<_>>>()?;
            let report = specialization_report(&dists, map.k, &params)?;
            let unrouted = report.experts.iter().filter(|e| e.unrouted).count();
            if unrouted > 0 {
                rec.note(format!(
                    "layer {} {}: {unrouted} expert(s) received no tokens and were excluded",
                    c.layer, c.kind
                ));
            }
            reports.push(report);
        }
    }

    rec.stage("write");
    write_scores_csv(&reports, &rec.path("scores.csv"))?;
    rec.output("scores.csv")?;
    rec.write_json("reports.json", &reports)?;
    let series: Vec<_> = reports.iter().map(|r| r.layer_point()).collect();
    rec.write_json("series.json", &series)?;
    rec.finish()?;
    for p in &series {
        println!(
            "layer {} k={} {}: adjusted {:.4} (raw {:.4}, baseline {:.4})",
            p.layer, p.k, p.kind, p.mean_adjusted, p.mean_raw, p.mean_baseline
        );
    }
    Ok(())
}
