use std::path::PathBuf;

use clap::{Args, Subcommand};
use expertscope::attribution::{dla, expert_update, logit_lens_normalized, run_trigger_target, ExpertCases};
use expertscope::model::Component;
use expertscope::{Error, Model, Result};
use serde::{Deserialize, Serialize};

use super::merge;
use crate::inputs;
use crate::manifest::Recorder;

#[derive(Subcommand)]
pub enum AttributeCommand {
    /// Trigger-target experiment over case files; reports rank categories.
    Cases(CasesArgs),
    /// Direct logit attribution of every component at one position of a text.
    Text(TextArgs),
}

#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CasesArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    layer: Option<usize>,
    /// JSON list of `{"expert": e, "cases": [{"text", "trigger", "target"}]}`.
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TextArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    text: String,
    /// Target word (its first token) or `#<id>`.
    #[arg(long)]
    target: String,
    /// Position to explain; the last token when omitted.
    #[arg(long)]
    position: Option<usize>,
    /// Number of lens entries to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Serialize)]
struct ComponentDla {
    component: Component,
    dla: f64,
}

#[derive(Serialize)]
struct TextReport {
    tokens: Vec<u32>,
    position: usize,
    target: u32,
    logit: f64,
    sum_of_components: f64,
    components: Vec<ComponentDla>,
    experts: Vec<ComponentDla>,
    lens_top: Vec<(u32, String, f64)>,
}

fn cases(flags: CasesArgs) -> Result<()> {
    let mut args: CasesArgs = inputs::config_file(flags.config.as_deref())?;
    merge!(flags, args; model, tokenizer, layer, cases, out);
    let model_dir = inputs::required(args.model.clone(), "--model")?;
    let case_path = inputs::required(args.cases.clone(), "--cases")?;
    let out = inputs::required(args.out.clone(), "--out")?;
    let layer = args.layer.ok_or_else(|| Error::Config("`--layer` is required".into()))?;
    let text = std::fs::read_to_string(&case_path).map_err(|e| Error::io(&case_path, e))?;
    let experts: Vec<ExpertCases> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", case_path.display())))?;
    let mut rec = Recorder::new("attribute cases", &args, &out)?;
    rec.input(
        "cases",
        case_path.display().to_string(),
        expertscope::model::container::sha256_hex(text.as_bytes()),
    );
    rec.stage("load");
    let model = inputs::model(&model_dir, &mut rec)?;
    let tokenizer = inputs::tokenizer(args.tokenizer.as_deref(), &mut rec)?;
    inputs::check_vocab(&model, &tokenizer)?;
    rec.stage("run");
    let report = run_trigger_target(&model, &tokenizer, layer, &experts)?;
    rec.stage("write");
    rec.write_json("report.json", &report)?;
    rec.write_json(
        "categories.json",
        &serde_json::json!({ "layer": layer, "matched": report.matched, "control": report.control }),
    )?;
    if !report.errors.is_empty() {
        rec.note(format!("{} case(s) could not be evaluated, see report.json", report.errors.len()));
    }
    rec.finish()?;
    for (name, a) in [("matched", &report.matched), ("control", &report.control)] {
        println!(
            "{name}: n={} top1 {:.1}% top8 {:.1}% lower {:.1}% not routed {:.1}%",
            a.n, a.top1_pct, a.top8_pct, a.lower_pct, a.not_routed_pct
        );
    }
    Ok(())
}

fn text(args: TextArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let tokenizer = match &args.tokenizer {
        Some(p) => expertscope::corpus::Tokenizer::load(p)?,
        None => expertscope::corpus::Tokenizer::shipped().clone(),
    };
    let tokens = tokenizer.encode(args.text.as_bytes());
    if tokens.is_empty() {
        return Err(Error::Config("text encodes to no tokens".into()));
    }
    let target = match args.target.strip_prefix('#') {
        Some(id) => id.parse().map_err(|_| Error::Config(format!("bad token id `{id}`")))?,
        None => *tokenizer
            .encode(args.target.as_bytes())
            .first()
            .ok_or_else(|| Error::Config("empty target".into()))?,
    };
    let position = args.position.unwrap_or(tokens.len() - 1);
    if position >= tokens.len() {
        return Err(Error::Config(format!("position {position} beyond {} tokens", tokens.len())));
    }
    let trace = model.forward(&tokens)?;
    let r = &trace.final_residual[position];
    let components = trace
        .residual_components(position)
        .into_iter()
        .map(|(component, v)| Ok(ComponentDla { component, dla: dla(&model, &v, r, target)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut experts = Vec::new();
    for layer in 0..model.config.n_layers {
        for e in 0..model.config.experts_in_layer(layer) {
            if trace.at(layer, position).gate(e) > 0.0 {
                let v = expert_update(&trace, layer, e, position);
                experts.push(ComponentDla {
                    component: Component::Expert { layer, expert: e },
                    dla: dla(&model, &v, r, target)?,
                });
            }
        }
    }
    let lens = logit_lens_normalized(&model, r, args.top);
    let report = TextReport {
        logit: trace.logits[position][target as usize],
        sum_of_components: components.iter().map(|c| c.dla).sum(),
        tokens,
        position,
        target,
        components,
        experts,
        lens_top: lens.top.iter().map(|(t, v)| (*t, tokenizer.token_str(*t), *v)).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn run(command: AttributeCommand) -> Result<()> {
    match command {
        AttributeCommand::Cases(a) => cases(a),
        AttributeCommand::Text(a) => text(a),
    }
}
