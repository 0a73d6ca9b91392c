//! Byte-level BPE tokenizer.
//!
//! Ids `0..256` are raw bytes; id `256 + i` is the `i`-th merge. Text is first
//! split into pieces (words with their leading space, digit runs, punctuation
//! runs, whitespace), and merges never cross piece boundaries.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use regex::bytes::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOKENIZER_FORMAT: &str = "expertscope-bpe/1";
const SHIPPED: &str = include_str!("../../assets/tokenizer_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizerFile {
    format: String,
    version: String,
    merges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    version: String,
    merges: Vec<[u32; 2]>,
    ranks: HashMap<(u32, u32), u32>,
    vocab: Vec<Vec<u8>>,
}

fn pieces_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"'(?:s|t|re|ve|m|ll|d)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+")
            .expect("static pattern")
    })
}

/// Splits `bytes` into pre-token pieces covering the input exactly.
///
/// Like the GPT-2 splitter, a whitespace run that precedes a word gives up its
/// final space to that word.
pub fn pre_tokenize(bytes: &[u8]) -> Vec<Range<usize>> {
    let mut raw = Vec::new();
    let mut at = 0;
    for m in pieces_regex().find_iter(bytes) {
        if m.start() > at {
            raw.push(at..m.start());
        }
        raw.push(m.range());
        at = m.end();
    }
    if at < bytes.len() {
        raw.push(at..bytes.len());
    }
    let mut out: Vec<Range<usize>> = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let r = raw[i].clone();
        let ws = bytes[r.clone()].iter().all(|b| b.is_ascii_whitespace());
        let next_is_bare = raw
            .get(i + 1)
            .map(|n| !bytes[n.start].is_ascii_whitespace())
            .unwrap_or(false);
        if ws && bytes[r.end - 1] == b' ' && next_is_bare {
            if r.len() > 1 {
                out.push(r.start..r.end - 1);
            }
            let next = raw[i + 1].clone();
            out.push(r.end - 1..next.end);
            i += 2;
        } else {
            out.push(r);
            i += 1;
        }
    }
    out
}

impl Tokenizer {
    fn from_merges(version: String, merges: Vec<[u32; 2]>) -> Result<Self> {
        let mut vocab: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, &[a, b]) in merges.iter().enumerate() {
            let n = vocab.len() as u32;
            if a >= n || b >= n {
                return Err(Error::Config(format!("merge {i} references undefined token")));
            }
            let mut bytes = vocab[a as usize].clone();
            bytes.extend_from_slice(&vocab[b as usize]);
            vocab.push(bytes);
            ranks.insert((a, b), i as u32);
        }
        Ok(Self {
            version,
            merges,
            ranks,
            vocab,
        })
    }

    /// The vocabulary shipped with the crate.
    pub fn shipped() -> &'static Tokenizer {
        static TOK: OnceLock<Tokenizer> = OnceLock::new();
        TOK.get_or_init(|| Tokenizer::from_json(SHIPPED).expect("shipped tokenizer is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TokenizerFile = serde_json::from_str(text)?;
        if file.format != TOKENIZER_FORMAT {
            return Err(Error::Config(format!("unsupported tokenizer format `{}`", file.format)));
        }
        Self::from_merges(file.version, file.merges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TokenizerFile {
            format: TOKENIZER_FORMAT.into(),
            version: self.version.clone(),
            merges: self.merges.clone(),
        };
        Ok(serde_json::to_string(&file)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Learns `vocab_size - 256` merges from `texts`. Pair ties go to the
    /// smallest `(left, right)` id pair.
    pub fn train<S: AsRef<[u8]>>(texts: &[S], vocab_size: usize, version: &str) -> Result<Self> {
        if vocab_size < 256 {
            return Err(Error::Config("vocab_size must be at least 256".into()));
        }
        let mut counts: HashMap<&[u8], u64> = HashMap::new();
        for t in texts {
            let bytes = t.as_ref();
            for r in pre_tokenize(bytes) {
                *counts.entry(&bytes[r]).or_default() += 1;
            }
        }
        let mut words: Vec<(Vec<u32>, u64)> = counts
            .into_iter()
            .map(|(w, c)| (w.iter().map(|b| *b as u32).collect(), c))
            .collect();
        words.sort();
        let mut merges = Vec::new();
        while 256 + merges.len() < vocab_size {
            let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
            for (w, c) in &words {
                for p in w.windows(2) {
                    *pairs.entry((p[0], p[1])).or_default() += c;
                }
            }
            let Some((&best, _)) = pairs
                .iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then(pb.cmp(pa)))
            else {
                break;
            };
            let id = 256 + merges.len() as u32;
            for (w, _) in &mut words {
                merge_pair(w, best, id);
            }
            merges.push([best.0, best.1]);
        }
        Self::from_merges(version.to_string(), merges)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Version plus a short hash of the merge table.
    pub fn id(&self) -> String {
        let mut bytes = Vec::with_capacity(self.merges.len() * 8);
        for [a, b] in &self.merges {
            bytes.extend_from_slice(&a.to_le_bytes());
            bytes.extend_from_slice(&b.to_le_bytes());
        }
        let hash = crate::model::container::sha256_hex(&bytes);
        format!("{}-{}", self.version, &hash[..12])
    }

    pub fn encode(&self, bytes: &[u8]) -> Vec<u32> {
        self.encode_with_offsets(bytes).0
    }

    /// Token ids plus the byte range each token covers.
    pub fn encode_with_offsets(&self, bytes: &[u8]) -> (Vec<u32>, Vec<Range<usize>>) {
        let mut ids = Vec::new();
        let mut offsets = Vec::new();
        for piece in pre_tokenize(bytes) {
            let mut syms: Vec<u32> = bytes[piece.clone()].iter().map(|b| *b as u32).collect();
            loop {
                let best = syms
                    .windows(2)
                    .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|r| (*r, (p[0], p[1]))))
                    .min();
                let Some((rank, pair)) = best else { break };
                merge_pair(&mut syms, pair, 256 + rank);
            }
            let mut at = piece.start;
            for s in syms {
                let len = self.vocab[s as usize].len();
                ids.push(s);
                offsets.push(at..at + len);
                at += len;
            }
        }
        (ids, offsets)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for (p, &id) in ids.iter().enumerate() {
            let bytes = self.vocab.get(id as usize).ok_or_else(|| Error::Input {
                position: p,
                message: format!("token id {id} out of range (vocab_size {})", self.vocab.len()),
            })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    pub fn token_bytes(&self, id: u32) -> &[u8] {
        self.vocab.get(id as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Token text with non-printable bytes escaped as `\xNN`.
    pub fn token_str(&self, id: u32) -> String {
        escape_bytes(self.token_bytes(id))
    }
}

/// Lossless rendering: valid UTF-8 is kept (control characters other than
/// newline and tab are escaped), invalid bytes become `\xNN`.
pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::new();
    for chunk in bytes.utf8_chunks() {
        for c in chunk.valid().chars() {
            if c.is_control() && c != '\n' && c != '\t' {
                out.extend(c.escape_default());
            } else {
                out.push(c);
            }
        }
        for b in chunk.invalid() {
            out.push_str(&format!("\\x{b:02x}"));
        }
    }
    out
}

fn merge_pair(syms: &mut Vec<u32>, pair: (u32, u32), id: u32) {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(id);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    *syms = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(Tokenizer::shipped().encode(b"").is_empty());
    }

    #[test]
    fn repeated_words_encode_identically() {
        let ids = Tokenizer::shipped().encode(b"the the");
        let n = ids.len();
        assert_eq!(n % 2, 1.min(n % 2));
        let first = Tokenizer::shipped().encode(b" the");
        assert!(ids.ends_with(&first));
    }

    #[test]
    fn pieces_attach_leading_space() {
        let text = b"hi  there 42!";
        let pieces: Vec<&[u8]> = pre_tokenize(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(pieces, vec![&b"hi"[..], b" ", b" there", b" 42", b"!"]);
    }

    #[test]
    fn shipped_vocab_has_expected_size() {
        assert_eq!(Tokenizer::shipped().vocab_size(), 1024);
    }

    #[test]
    fn training_is_deterministic() {
        let texts = ["low lower lowest", "newer newest wider"];
        let a = Tokenizer::train(&texts, 280, "t").unwrap();
        let b = Tokenizer::train(&texts, 280, "t").unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.decode(&a.encode(b"lowest newer")).unwrap(), b"lowest newer");
    }

    proptest! {
        #[test]
        fn roundtrips_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let tok = Tokenizer::shipped();
            let (ids, offsets) = tok.encode_with_offsets(&bytes);
            prop_assert_eq!(tok.decode(&ids).unwrap(), bytes.clone());
            let covered: usize = offsets.iter().map(|r| r.len()).sum();
            prop_assert_eq!(covered, bytes.len());
        }

        #[test]
        fn roundtrips_text(s in "[a-zA-Z0-9 ,.\\n\\t_(){}\\\\$é]{0,120}") {
            let tok = Tokenizer::shipped();
            prop_assert_eq!(tok.decode(&tok.encode(s.as_bytes())).unwrap(), s.as_bytes().to_vec());
        }
    }
}
