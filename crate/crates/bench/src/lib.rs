//! Shared fixtures for the criterion benchmarks.

use std::collections::HashSet;

use tglm_core::corpus::{
    bag_of_words, encode_corpus, generate_synthetic_corpus, CountVector, Document, SynthConfig, TopicVocab, Vocabulary,
};
use tglm_core::Rng;

/// An encoded synthetic corpus.
pub struct Fixture {
    pub vocab: Vocabulary,
    pub tv: TopicVocab,
    pub docs: Vec<Document>,
    pub bows: Vec<CountVector>,
}

pub fn fixture(docs: usize, doc_len: usize) -> Fixture {
    let cfg = SynthConfig {
        docs,
        doc_len,
        valid_frac: 0.0,
        test_frac: 0.0,
        ..SynthConfig::default()
    };
    let corpus = generate_synthetic_corpus(&cfg, &Rng::new(1)).expect("valid synthetic config");
    let vocab = Vocabulary::build(&corpus.train.docs, 1).expect("non-empty corpus");
    let stop: HashSet<String> = corpus.function_words.iter().cloned().collect();
    let tv = TopicVocab::build(&vocab, &stop, 0.0, 0).expect("topic vocabulary");
    let docs = encode_corpus(&corpus.train.docs, &vocab, 0);
    let bows = docs
        .iter()
        .map(|d| bag_of_words(d, &tv, None).expect("bag"))
        .collect();
    Fixture { vocab, tv, docs, bows }
}
