use std::path::PathBuf;

use clap::{Args, Subcommand};
use expertscope::model::{plant_experts, FfnKind, ModelConfig, PlantGains, PlantSpec};
use expertscope::{Error, Model, Result};
use serde::{Deserialize, Serialize};

use crate::manifest::Recorder;

#[derive(Subcommand)]
pub enum ModelCommand {
    /// Seeded random weights from a preset or a config file.
    Init(InitArgs),
    /// Seeded random weights with planted experts.
    Plant(PlantArgs),
    /// Print shapes and the routing sparsity of a saved model.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct ConfigSource {
    /// olmoe-toy, small-moe or small-dense.
    #[arg(long, conflicts_with = "model_config")]
    preset: Option<String>,
    /// Model config JSON.
    #[arg(long = "model-config")]
    model_config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigSource {
    fn resolve(&self) -> Result<ModelConfig> {
        let mut config = match (&self.preset, &self.model_config) {
            (Some(p), _) => ModelConfig::preset(p)?,
            (None, Some(path)) => ModelConfig::load(path)?,
            (None, None) => return Err(Error::Config("give --preset or --model-config".into())),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
pub struct InitArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct PlantArgs {
    /// Take the config (and seed) of an existing model directory.
    #[arg(long, conflicts_with_all = ["preset", "model_config"])]
    model: Option<PathBuf>,
    #[command(flatten)]
    source: ConfigSource,
    /// JSON with `plants` (list of plant specs) and optional `gains`.
    #[arg(long)]
    specs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
    /// List every tensor with its shape.
    #[arg(long)]
    tensors: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub plants: Vec<PlantSpec>,
    #[serde(default)]
    pub gains: PlantGains,
}

fn save(model: &Model, command: &str, extra: serde_json::Value, out: &std::path::Path) -> Result<()> {
    let config = serde_json::json!({ "model": model.config, "extra": extra });
    let mut rec = Recorder::new(command, &config, out)?;
    rec.seed("model", model.config.seed);
    rec.stage("save");
    model.save(out)?;
    rec.output("config.json")?;
    rec.output("weights.bin")?;
    rec.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct Inspection {
    config: ModelConfig,
    n_experts: usize,
    n_active: usize,
    n_shared: usize,
    routing_sparsity: f64,
    moe_layers: usize,
    parameters: usize,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn run(command: ModelCommand) -> Result<()> {
    match command {
        ModelCommand::Init(a) => {
            let model = Model::random(a.source.resolve()?)?;
            save(&model, "model init", serde_json::Value::Null, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        ModelCommand::Plant(a) => {
            let config = match &a.model {
                Some(dir) => ModelConfig::load(&dir.join("config.json"))?,
                None => a.source.resolve()?,
            };
            let text = std::fs::read_to_string(&a.specs).map_err(|e| Error::io(&a.specs, e))?;
            let file: PlantFile =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", a.specs.display())))?;
            let weights = plant_experts(&config, &file.plants, file.gains)?;
            let model = Model::new(config, weights)?;
            save(&model, "model plant", serde_json::to_value(&file)?, &a.out)?;
            println!("planted {} expert(s) into {}", file.plants.len(), a.out.display());
        }
        ModelCommand::Inspect(a) => {
            let model = Model::load(&a.model)?;
            let c = &model.config;
            let tensors: Vec<(String, Vec<usize>)> =
                model.weights.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
            let info = Inspection {
                n_experts: c.n_experts,
                n_active: c.n_active,
                n_shared: c.n_shared,
                routing_sparsity: c.routing_sparsity(),
                moe_layers: c.ffn_kind.iter().filter(|k| **k == FfnKind::Moe).count(),
                parameters: tensors.iter().map(|(_, s)| s.iter().product::<usize>()).sum(),
                tensors,
                config: c.clone(),
            };
            if a.json {
                println!("{}", serde_json::to_string_pretty(&info)?);
            } else {
                println!(
                    "d_model={} n_layers={} n_heads={} d_ff={} vocab_size={} norm={:?} seed={}",
                    c.d_model, c.n_layers, c.n_heads, c.d_ff, c.vocab_size, c.norm_kind, c.seed
                );
                println!("N={} N_A={} shared={}", c.n_experts, c.n_active, c.n_shared);
                println!("routing sparsity N_A/N = {}", info.routing_sparsity);
                println!("moe layers {} of {}", info.moe_layers, c.n_layers);
                println!("parameters {}", info.parameters);
                if a.tensors {
                    for (name, shape) in &info.tensors {
                        println!("  {name} {shape:?}");
                    }
                }
            }
        }
    }
    Ok(())
}
