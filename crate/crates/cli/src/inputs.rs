//! Loading of models, tokenizers, corpora and config files, with their hashes
//! recorded in the manifest.

use std::path::{Path, PathBuf};

use expertscope::corpus::{TokenizedCorpus, Tokenizer};
use expertscope::model::container::sha256_hex;
use expertscope::{Error, Model, Result};
use serde::de::DeserializeOwned;

use crate::manifest::Recorder;

/// Reads a JSON config file, or the type's defaults when no file is given.
pub fn config_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

pub fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Config(format!("`{flag}` is required (flag or config file)")))
}

pub fn model(dir: &Path, rec: &mut Recorder) -> Result<Model> {
    let model = Model::load(dir)?;
    let mut bytes = Vec::new();
    for name in ["config.json", "weights.bin"] {
        let p = dir.join(name);
        bytes.extend(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    rec.input("model", dir.display().to_string(), sha256_hex(&bytes));
    Ok(model)
}

pub fn tokenizer(path: Option<&Path>, rec: &mut Recorder) -> Result<Tokenizer> {
    let tok = match path {
        Some(p) => Tokenizer::load(p)?,
        None => Tokenizer::shipped().clone(),
    };
    let source = path.map_or("builtin:tokenizer".to_string(), |p| p.display().to_string());
    rec.input("tokenizer", source, sha256_hex(tok.to_json()?.as_bytes()));
    Ok(tok)
}

/// The given JSON-lines corpus, or the bundled fixture when none is given.
pub fn corpus(path: Option<&Path>, tokenizer: &Tokenizer, rec: &mut Recorder) -> Result<TokenizedCorpus> {
    let corpus = match path {
        Some(p) => TokenizedCorpus::load(p, tokenizer)?,
        None => TokenizedCorpus::from_texts(
            TokenizedCorpus::fixture_texts(),
            tokenizer,
            TokenizedCorpus::fixture_provenance(),
        ),
    };
    rec.input("corpus", corpus.provenance.source.clone(), corpus.provenance.sha256.clone());
    Ok(corpus)
}

pub fn check_vocab(model: &Model, tokenizer: &Tokenizer) -> Result<()> {
    if tokenizer.vocab_size() > model.config.vocab_size {
        return Err(Error::Config(format!(
            "tokenizer has {} tokens but the model vocabulary is {}",
            tokenizer.vocab_size(),
            model.config.vocab_size
        )));
    }
    Ok(())
}
