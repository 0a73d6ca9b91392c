//! Corpus loading and tokenization.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};
use crate::model::container::sha256_hex;

const FIXTURE: &str = include_str!("../../assets/corpus/fixture.jsonl");

/// Where a corpus came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub sha256: String,
}

/// A contiguous slice of one document traced as a single forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub doc: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub texts: Vec<String>,
    pub documents: Vec<Vec<u32>>,
    /// Byte range of every token inside its document text.
    pub offsets: Vec<Vec<Range<usize>>>,
    pub tokenizer_id: String,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct JsonlRecord {
    text: String,
}

/// Parses JSON-lines `{"text": ...}` records; blank lines are skipped.
pub fn parse_jsonl(content: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| Error::Dataset(format!("line {}: {e}", i + 1)))?;
        out.push(rec.text);
    }
    Ok(out)
}

/// Reads documents from a `.jsonl` file (one record per line) or any other
/// UTF-8 text file (one document).
pub fn load_documents(path: &Path) -> Result<(Vec<String>, Provenance)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let provenance = Provenance {
        source: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    let content = String::from_utf8(bytes)
        .map_err(|e| Error::Dataset(format!("{} is not UTF-8: {e}", path.display())))?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let texts = if is_jsonl { parse_jsonl(&content)? } else { vec![content] };
    Ok((texts, provenance))
}

impl TokenizedCorpus {
    pub fn from_texts(texts: Vec<String>, tokenizer: &Tokenizer, provenance: Provenance) -> Self {
        use rayon::prelude::*;
        let (documents, offsets) = texts
            .par_iter()
            .map(|t| tokenizer.encode_with_offsets(t.as_bytes()))
            .unzip();
        Self {
            texts,
            documents,
            offsets,
            tokenizer_id: tokenizer.id(),
            provenance,
        }
    }

    pub fn load(path: &Path, tokenizer: &Tokenizer) -> Result<Self> {
        let (texts, provenance) = load_documents(path)?;
        Ok(Self::from_texts(texts, tokenizer, provenance))
    }

    /// The fixture corpus shipped with the crate, tokenized with the shipped
    /// tokenizer.
    pub fn fixture() -> Self {
        Self::from_texts(Self::fixture_texts(), Tokenizer::shipped(), Self::fixture_provenance())
    }

    pub fn fixture_provenance() -> Provenance {
        Provenance {
            source: "builtin:fixture.jsonl".into(),
            sha256: sha256_hex(FIXTURE.as_bytes()),
        }
    }

    pub fn fixture_texts() -> Vec<String> {
        parse_jsonl(FIXTURE).expect("fixture corpus parses")
    }

    pub fn n_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Splits every document into consecutive windows of at most `context`
    /// tokens.
    pub fn chunks(&self, context: usize) -> Vec<Chunk> {
        let mut out = Vec::new();
        for (doc, ids) in self.documents.iter().enumerate() {
            let mut start = 0;
            while start < ids.len() {
                let end = (start + context).min(ids.len());
                out.push(Chunk { doc, start, end });
                start = end;
            }
        }
        out
    }

    /// The chunk containing `(doc, position)` under [`Self::chunks`].
    pub fn chunk_of(&self, doc: usize, position: usize, context: usize) -> Chunk {
        let start = position / context * context;
        Chunk {
            doc,
            start,
            end: (start + context).min(self.documents[doc].len()),
        }
    }

    pub fn chunk_tokens(&self, chunk: Chunk) -> &[u32] {
        &self.documents[chunk.doc][chunk.start..chunk.end]
    }

    /// Keeps whole documents, in order, until `budget` tokens are reached.
    pub fn truncated(&self, budget: usize) -> Self {
        let mut n = 0;
        let mut keep = 0;
        for d in &self.documents {
            if n >= budget {
                break;
            }
            n += d.len();
            keep += 1;
        }
        Self {
            texts: self.texts[..keep].to_vec(),
            documents: self.documents[..keep].to_vec(),
            offsets: self.offsets[..keep].to_vec(),
            tokenizer_id: self.tokenizer_id.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_errors_name_the_line() {
        let err = parse_jsonl("{\"text\": \"a\"}\n\nnot json\n").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn plain_text_file_is_one_document() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "one\n\ntwo").unwrap();
        let c = TokenizedCorpus::load(&p, Tokenizer::shipped()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.provenance.sha256, sha256_hex(b"one\n\ntwo"));
    }
}
