use expertscope::corpus::{label_tokens, shipped_concepts, Concept, TokenizedCorpus, Tokenizer};

#[test]
fn every_shipped_concept_has_fifty_fixture_positives() {
    let corpus = TokenizedCorpus::fixture();
    for spec in shipped_concepts() {
        let labels = label_tokens(&corpus, &Concept::compile(&spec).unwrap());
        let n: usize = labels.iter().map(|d| d.iter().filter(|l| **l).count()).sum();
        assert!(n >= 50, "{} has only {n} positive tokens", spec.name);
    }
}

#[test]
fn labels_follow_document_permutation() {
    let corpus = TokenizedCorpus::fixture().truncated(5_000);
    let concept = Concept::compile(&expertscope::corpus::find_concept("contains_digit").unwrap()).unwrap();
    let labels = label_tokens(&corpus, &concept);
    let mut texts = corpus.texts.clone();
    texts.reverse();
    let reversed = TokenizedCorpus::from_texts(texts, Tokenizer::shipped(), corpus.provenance.clone());
    let mut relabeled = label_tokens(&reversed, &concept);
    relabeled.reverse();
    assert_eq!(labels, relabeled);
}

#[test]
fn shipped_tokenizer_retrains_identically() {
    let retrained = Tokenizer::train(&TokenizedCorpus::fixture_texts(), 1024, "v1").unwrap();
    assert_eq!(retrained.to_json().unwrap(), Tokenizer::shipped().to_json().unwrap());
}

#[test]
fn fixture_roundtrips_through_the_tokenizer() {
    let corpus = TokenizedCorpus::fixture();
    let tok = Tokenizer::shipped();
    for (text, ids) in corpus.texts.iter().zip(&corpus.documents) {
        assert_eq!(tok.decode(ids).unwrap(), text.as_bytes());
    }
}
