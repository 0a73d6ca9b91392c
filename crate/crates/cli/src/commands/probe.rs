use std::path::PathBuf;

use clap::Args;
use expertscope::corpus::{shipped_concepts, Concept, ConceptRegistry, ConceptSpec};
use expertscope::probing::{run_sweep, Site, SweepSettings};
use expertscope::{Error, Result};
use serde::{Deserialize, Serialize};

use super::merge;
use crate::inputs;
use crate::manifest::Recorder;

#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeArgs {
    /// JSON file with any of these options; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// JSON-lines corpus; the bundled fixture corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Concept names (comma separated); every concept when omitted.
    #[arg(long, value_delimiter = ',')]
    concepts: Option<Vec<String>>,
    /// Concept registry JSON used instead of the bundled concepts.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Sites such as L0E3 or L1 (comma separated); all sites when omitted.
    #[arg(long, value_delimiter = ',')]
    sites: Option<Vec<Site>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    context: Option<usize>,
    /// L2 strength; 1/n_train when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Also write the mean best-site F1 per k with its interval.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    plot_data: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Effective<'a> {
    model: &'a PathBuf,
    corpus: &'a Option<PathBuf>,
    tokenizer: &'a Option<PathBuf>,
    registry: &'a Option<PathBuf>,
    concepts: Vec<String>,
    settings: &'a SweepSettings,
    plot_data: bool,
}

fn concepts(args: &ProbeArgs) -> Result<Vec<Concept>> {
    let pool: Vec<ConceptSpec> = match &args.registry {
        Some(p) => ConceptRegistry::load(p)?.concepts,
        None => shipped_concepts(),
    };
    let chosen: Vec<ConceptSpec> = match &args.concepts {
        None => pool,
        Some(names) if names.iter().any(|n| n == "all") => pool,
        Some(names) => names
            .iter()
            .map(|n| {
                pool.iter().find(|c| &c.name == n).cloned().ok_or_else(|| Error::Concept {
                    concept: n.clone(),
                    message: "not in the concept registry".into(),
                })
            })
            .collect::<Result<_>>()?,
    };
    chosen.iter().map(Concept::compile).collect()
}

pub fn run(flags: ProbeArgs) -> Result<()> {
    let mut args: ProbeArgs = inputs::config_file(flags.config.as_deref())?;
    merge!(flags, args; model, corpus, tokenizer, concepts, registry, k, sites, samples, seed, context, lambda, plot_data, out);
    let model_dir = inputs::required(args.model.clone(), "--model")?;
    let out = inputs::required(args.out.clone(), "--out")?;
    let mut settings = SweepSettings::default();
    if let Some(k) = &args.k {
        settings.k_values = k.clone();
    }
    settings.sites = args.sites.clone();
    if let Some(n) = args.samples {
        settings.n_samples = n;
    }
    if let Some(s) = args.seed {
        settings.seed = s;
    }
    if let Some(c) = args.context {
        settings.context = c;
    }
    settings.probe.lambda = args.lambda;
    let concepts = concepts(&args)?;
    let plot_data = args.plot_data.unwrap_or(false);
    let effective = Effective {
        model: &model_dir,
        corpus: &args.corpus,
        tokenizer: &args.tokenizer,
        registry: &args.registry,
        concepts: concepts.iter().map(|c| c.name().to_string()).collect(),
        settings: &settings,
        plot_data,
    };
    let mut rec = Recorder::new("probe", &effective, &out)?;
    rec.seed("split", settings.seed);
    rec.stage("load");
    let model = inputs::model(&model_dir, &mut rec)?;
    let tokenizer = inputs::tokenizer(args.tokenizer.as_deref(), &mut rec)?;
    inputs::check_vocab(&model, &tokenizer)?;
    let corpus = inputs::corpus(args.corpus.as_deref(), &tokenizer, &mut rec)?;
    rec.stage("sweep");
    let result = run_sweep(&model, &corpus, &concepts, &settings)?;
    rec.stage("write");
    result.write_csv(&rec.path("results.csv"))?;
    rec.output("results.csv")?;
    rec.write_json("results.json", &result)?;
    rec.write_json("best.json", &result.best)?;
    if plot_data {
        rec.write_json("plot.json", &result.plot_series())?;
    }
    let skipped = result.grid.len() - result.fitted().count();
    if skipped > 0 {
        rec.note(format!("{skipped} grid entries skipped, see results.csv"));
    }
    rec.finish()?;
    for b in &result.best {
        println!("{} k={} best {} F1 {:.4}", b.concept, b.k, b.site, b.test_f1);
    }
    Ok(())
}
