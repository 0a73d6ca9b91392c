use std::path::PathBuf;

use clap::Args;
use expertscope::autointerp::{
    label_experts, layer_series, mine_examples, write_labels_csv, HttpClient, LabelSettings, LabelStatus, LlmClient,
    LlmEndpoint, MiningSettings, MockClient, MockMode, PromptTemplates, TranscriptStore, TEMPLATE_VERSION,
};
use expertscope::{Error, Result};
use serde::{Deserialize, Serialize};

use super::merge;
use crate::inputs;
use crate::manifest::Recorder;

#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutointerpArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Endpoint JSON (`base_url`, `model`, `auth_env`, ...).
    #[arg(long, conflicts_with = "mock_endpoint")]
    endpoint: Option<PathBuf>,
    /// Offline scripted endpoint: ground-truth, all-positive, all-negative or echo.
    #[arg(long)]
    mock_endpoint: Option<MockMode>,
    /// Layers whose experts are labelled; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Mining budget in tokens.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experts talking to the endpoint at once.
    #[arg(long)]
    in_flight: Option<usize>,
    /// Prompt template directory; the bundled templates when omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Effective<'a> {
    model: &'a PathBuf,
    corpus: &'a Option<PathBuf>,
    tokenizer: &'a Option<PathBuf>,
    endpoint: Option<LlmEndpoint>,
    mock_endpoint: Option<MockMode>,
    layers: &'a [usize],
    mining: MiningSettings,
    labeling: LabelSettings,
    templates: String,
}

pub fn run(flags: AutointerpArgs) -> Result<()> {
    let mut args: AutointerpArgs = inputs::config_file(flags.config.as_deref())?;
    merge!(flags, args; model, corpus, tokenizer, endpoint, mock_endpoint, layers, budget, seed, in_flight, templates, out);
    if flags.mock_endpoint.is_some() {
        args.endpoint = None;
    } else if flags.endpoint.is_some() {
        args.mock_endpoint = None;
    }
    let model_dir = inputs::required(args.model.clone(), "--model")?;
    let out = inputs::required(args.out.clone(), "--out")?;
    let endpoint: Option<LlmEndpoint> = match &args.endpoint {
        Some(p) => Some(inputs::config_file(Some(p))?),
        None => None,
    };
    let client: Box<dyn LlmClient> = match (&endpoint, args.mock_endpoint) {
        (_, Some(mode)) => Box::new(MockClient { mode }),
        (Some(e), None) => Box::new(HttpClient::new(e.clone())?),
        (None, None) => return Err(Error::Config("give --endpoint or --mock-endpoint".into())),
    };
    let templates = match &args.templates {
        Some(dir) => PromptTemplates::load(dir, TEMPLATE_VERSION)?,
        None => PromptTemplates::shipped(),
    };
    let config = expertscope::ModelConfig::load(&model_dir.join("config.json"))?;
    let layers = args.layers.clone().unwrap_or((0..config.n_layers).collect());
    if let Some(l) = layers.iter().find(|l| **l >= config.n_layers) {
        return Err(Error::Config(format!("layer {l} out of range")));
    }
    let seed = args.seed.unwrap_or(0);
    let mut mining = MiningSettings {
        seed,
        ..Default::default()
    };
    if let Some(b) = args.budget {
        mining.budget_tokens = b;
    }
    let labeling = LabelSettings {
        seed,
        in_flight: args.in_flight.unwrap_or(LabelSettings::default().in_flight),
    };
    let effective = Effective {
        model: &model_dir,
        corpus: &args.corpus,
        tokenizer: &args.tokenizer,
        endpoint: endpoint.clone(),
        mock_endpoint: args.mock_endpoint,
        layers: &layers,
        mining,
        labeling,
        templates: templates.version.clone(),
    };
    let mut rec = Recorder::new("autointerp", &effective, &out)?;
    rec.seed("windows_partition_scorer", seed);
    rec.stage("load");
    let model = inputs::model(&model_dir, &mut rec)?;
    let tokenizer = inputs::tokenizer(args.tokenizer.as_deref(), &mut rec)?;
    inputs::check_vocab(&model, &tokenizer)?;
    let corpus = inputs::corpus(args.corpus.as_deref(), &tokenizer, &mut rec)?;

    rec.stage("mine");
    let experts: Vec<(usize, usize)> = layers
        .iter()
        .flat_map(|&l| (0..config.experts_in_layer(l)).map(move |e| (l, e)))
        .collect();
    let mined = mine_examples(&model, &tokenizer, &corpus, Some(&experts), &mining)?;
    let unlabelable = mined.pools.iter().filter(|p| p.unlabelable.is_some()).count();
    if unlabelable > 0 {
        rec.note(format!("{unlabelable} expert(s) had fewer than {} scored windows", mining.top));
    }
    rec.write_json("mining.json", &mined)?;

    rec.stage("label");
    let transcript = rec.path("transcripts.jsonl");
    let _ = std::fs::remove_file(&transcript);
    let store = TranscriptStore::append_to(&transcript)?;
    let records = label_experts(&mined, client.as_ref(), &templates, &store, &labeling)?;

    rec.stage("write");
    rec.write_json("labels.json", &records)?;
    write_labels_csv(&records, &rec.path("labels.csv"))?;
    rec.output("labels.csv")?;
    let series = layer_series(&records);
    rec.write_json("series.json", &series)?;
    let failed = records.iter().filter(|r| r.status == LabelStatus::ParseFailure).count();
    if failed > 0 {
        rec.note(format!("{failed} expert(s) excluded after unparseable scorer replies"));
    }
    rec.note(format!("transcripts in {} (not hashed: they carry timestamps)", "transcripts.jsonl"));
    rec.finish()?;
    for p in &series {
        match p.mean_f1 {
            Some(f1) => println!("layer {}: mean F1 {:.4} over {}/{} experts", p.layer, f1, p.labeled, p.experts),
            None => println!("layer {}: no labelled experts", p.layer),
        }
    }
    Ok(())
}
