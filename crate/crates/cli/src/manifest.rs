//! One `manifest.json` per artifact directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use expertscope::model::container::sha256_hex;
use expertscope::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub role: String,
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    /// Effective configuration after flags, file and defaults were merged.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<OutputHash>,
    pub timings_secs: BTreeMap<String, f64>,
    /// Same config and inputs as the manifest this one replaced.
    pub reproduction: bool,
    /// For reproductions: whether every output hash matched the earlier run.
    pub outputs_identical: Option<bool>,
    pub notes: Vec<String>,
}

/// Collects what goes into the manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    out: PathBuf,
    stage: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new(command: &str, config: &impl Serialize, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                toolkit_version: env!("CARGO_PKG_VERSION").into(),
                config,
                config_hash,
                seeds: BTreeMap::new(),
                inputs: vec![],
                outputs: vec![],
                timings_secs: BTreeMap::new(),
                reproduction: false,
                outputs_identical: None,
                notes: vec![],
            },
            out: out.to_path_buf(),
            stage: None,
        })
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    pub fn input(&mut self, role: &str, source: impl Into<String>, sha256: impl Into<String>) {
        self.manifest.inputs.push(InputHash {
            role: role.into(),
            source: source.into(),
            sha256: sha256.into(),
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.manifest.notes.contains(&note) {
            tracing::warn!("{note}");
            self.manifest.notes.push(note);
        }
    }

    /// Starts timing `name`, closing the previous stage.
    pub fn stage(&mut self, name: &str) {
        self.close_stage();
        self.stage = Some((name.into(), Instant::now()));
    }

    fn close_stage(&mut self) {
        if let Some((name, t)) = self.stage.take() {
            self.manifest.timings_secs.insert(name, t.elapsed().as_secs_f64());
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes a primary output and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.output(name)?;
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        self.write(name, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
    }

    /// Records the hash of an output written by other code.
    pub fn output(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.manifest.outputs.retain(|o| o.path != name);
        self.manifest.outputs.push(OutputHash {
            path: name.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.close_stage();
        let path = self.out.join(MANIFEST_FILE);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(previous) = serde_json::from_str::<RunManifest>(&text) {
                if previous.command == self.manifest.command
                    && previous.config_hash == self.manifest.config_hash
                    && previous.inputs == self.manifest.inputs
                {
                    self.manifest.reproduction = true;
                    let mut a = previous.outputs.clone();
                    let mut b = self.manifest.outputs.clone();
                    a.sort_by(|x, y| x.path.cmp(&y.path));
                    b.sort_by(|x, y| x.path.cmp(&y.path));
                    self.manifest.outputs_identical = Some(a == b);
                }
            }
        }
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}
