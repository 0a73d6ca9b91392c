//! Regex concept definitions and token labeling.

use std::ops::Range;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ingest::TokenizedCorpus;
use crate::error::{Error, Result};

const SHIPPED: [(&str, &str); 4] = [
    ("pos", include_str!("../../assets/concepts/pos.json")),
    ("text", include_str!("../../assets/concepts/text.json")),
    ("code", include_str!("../../assets/concepts/code.json")),
    ("latex", include_str!("../../assets/concepts/latex.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Pos,
    Latex,
    Code,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptExamples {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// A binary token concept.
///
/// `rule` is matched against document text. If it has capture groups, group 1
/// marks the positive span (matches where group 1 did not take part mark
/// nothing); otherwise the whole match does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSpec {
    pub name: String,
    pub category: Category,
    pub rule: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<ConceptExamples>,
}

/// One category's registry document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptRegistry {
    pub category: Category,
    pub version: u32,
    pub concepts: Vec<ConceptSpec>,
}

impl ConceptRegistry {
    pub fn from_json(text: &str) -> Result<Self> {
        let reg: ConceptRegistry = serde_json::from_str(text)?;
        for c in &reg.concepts {
            if c.category != reg.category {
                return Err(Error::Concept {
                    concept: c.name.clone(),
                    message: format!("category {:?} in a {:?} registry", c.category, reg.category),
                });
            }
            Concept::compile(c)?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// All concepts shipped with the crate, in registry order.
pub fn shipped_concepts() -> Vec<ConceptSpec> {
    SHIPPED
        .iter()
        .flat_map(|(name, text)| {
            ConceptRegistry::from_json(text)
                .unwrap_or_else(|e| panic!("shipped registry {name}: {e}"))
                .concepts
        })
        .collect()
}

pub fn find_concept(name: &str) -> Result<ConceptSpec> {
    shipped_concepts()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Concept {
            concept: name.into(),
            message: "no shipped concept with this name".into(),
        })
}

#[derive(Debug, Clone)]
pub struct Concept {
    pub spec: ConceptSpec,
    regex: Regex,
}

impl Concept {
    pub fn compile(spec: &ConceptSpec) -> Result<Self> {
        let regex = Regex::new(&spec.rule).map_err(|e| Error::Concept {
            concept: spec.name.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            spec: spec.clone(),
            regex,
        })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Concept-positive byte spans of `text`, non-overlapping, in order.
    pub fn positive_spans(&self, text: &str) -> Vec<Range<usize>> {
        if self.regex.captures_len() > 1 {
            self.regex
                .captures_iter(text)
                .filter_map(|c| c.get(1).map(|m| m.range()))
                .filter(|r| !r.is_empty())
                .collect()
        } else {
            self.regex
                .find_iter(text)
                .map(|m| m.range())
                .filter(|r| !r.is_empty())
                .collect()
        }
    }

    /// True for every token whose byte span overlaps a positive span.
    pub fn label(&self, text: &str, offsets: &[Range<usize>]) -> Vec<bool> {
        let spans = self.positive_spans(text);
        let mut out = Vec::with_capacity(offsets.len());
        let mut s = 0;
        for tok in offsets {
            while s < spans.len() && spans[s].end <= tok.start {
                s += 1;
            }
            out.push(spans[s..].iter().take_while(|sp| sp.start < tok.end).any(|sp| sp.end > tok.start));
        }
        out
    }

    /// Whole-text check used by the registry examples.
    pub fn matches(&self, text: &str) -> bool {
        !self.positive_spans(text).is_empty()
    }
}

/// Per-document, per-token labels.
pub fn label_tokens(corpus: &TokenizedCorpus, concept: &Concept) -> Vec<Vec<bool>> {
    use rayon::prelude::*;
    corpus
        .texts
        .par_iter()
        .zip(&corpus.offsets)
        .map(|(text, offsets)| concept.label(text, offsets))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tokenizer;

    fn concept(name: &str) -> Concept {
        Concept::compile(&find_concept(name).unwrap()).unwrap()
    }

    fn labeled(c: &Concept, text: &str) -> Vec<(String, bool)> {
        let tok = Tokenizer::shipped();
        let (ids, offsets) = tok.encode_with_offsets(text.as_bytes());
        let labels = c.label(text, &offsets);
        ids.iter().map(|i| tok.token_str(*i)).zip(labels).collect()
    }

    #[test]
    fn all_digits_marks_the_number_tokens() {
        for (tok, label) in labeled(&concept("all_digits"), "abc 123") {
            assert_eq!(label, tok.chars().any(|c| c.is_ascii_digit()), "{tok:?}");
        }
    }

    #[test]
    fn comment_concept_on_plain_text_is_all_negative() {
        assert!(labeled(&concept("is_comment"), "no comments here at all").iter().all(|(_, l)| !l));
    }

    #[test]
    fn leading_capital_marks_hello() {
        let out = labeled(&concept("leading_capital"), "Hello world");
        assert!(out[0].0.starts_with('H') && out[0].1);
        assert!(!out.last().unwrap().1);
    }

    #[test]
    fn group_one_defines_the_span() {
        let spec = ConceptSpec {
            name: "x".into(),
            category: Category::Code,
            rule: r"def (\w+)|(zzz)".into(),
            description: String::new(),
            examples: None,
        };
        let c = Concept::compile(&spec).unwrap();
        assert_eq!(c.positive_spans("def foo zzz"), vec![4..7]);
    }

    #[test]
    fn bad_rule_is_a_concept_error() {
        let spec = ConceptSpec {
            name: "broken".into(),
            category: Category::Text,
            rule: "(".into(),
            description: String::new(),
            examples: None,
        };
        assert!(matches!(Concept::compile(&spec), Err(Error::Concept { .. })));
    }

    #[test]
    fn shipped_examples_behave() {
        let concepts = shipped_concepts();
        assert_eq!(concepts.len(), 58);
        for spec in concepts {
            let c = Concept::compile(&spec).unwrap();
            let ex = spec.examples.as_ref().unwrap();
            assert_eq!((ex.positive.len(), ex.negative.len()), (3, 3), "{}", spec.name);
            for p in &ex.positive {
                assert!(c.matches(p), "{} should match {p:?}", spec.name);
            }
            for n in &ex.negative {
                assert!(!c.matches(n), "{} should not match {n:?}", spec.name);
            }
        }
    }
}
