//! Corpus ingestion, tokenization, concept labeling and dataset assembly.

mod concepts;
mod dataset;
mod ingest;
mod tokenizer;

pub use concepts::{
    find_concept, label_tokens, shipped_concepts, Category, Concept, ConceptExamples, ConceptRegistry, ConceptSpec,
};
pub use dataset::{build_dataset, ClassCounts, ConceptDataset, Filtered, RoutedSite, Sample};
pub use ingest::{load_documents, Chunk, parse_jsonl, Provenance, TokenizedCorpus};
pub use tokenizer::{escape_bytes, pre_tokenize, Tokenizer, TOKENIZER_FORMAT};
