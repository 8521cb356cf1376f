#![allow(dead_code)]
pub mod oracles;

use std::collections::HashSet;

use tglm_core::corpus::{Conditioning, Document, TopicVocab, EOS_ID, NUM_SPECIALS, SOS_ID};
use tglm_core::rnn::LmConfig;
use tglm_core::tglm::{TglmConfig, TglmKind, TopicGuidedLm};
use tglm_core::Rng;

/// Random document with the given sentence lengths (regular ids only).
pub fn random_doc(rng: &mut Rng, doc_id: u32, vocab: usize, sentences: &[usize]) -> Document {
    let mut ids = vec![SOS_ID];
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &len) in sentences.iter().enumerate() {
        for _ in 0..len {
            ids.push((NUM_SPECIALS + rng.below(vocab - NUM_SPECIALS)) as u32);
        }
        if i + 1 == sentences.len() {
            ids.push(EOS_ID);
        }
        spans.push((start, ids.len()));
        start = ids.len();
    }
    Document {
        doc_id,
        token_ids: ids,
        sentence_spans: spans,
    }
}

pub fn tiny_lm(vocab: usize, hidden: usize, embed: usize, gru: bool) -> LmConfig {
    LmConfig {
        vocab_size: vocab,
        layers: 1,
        hidden,
        embed,
        dropout: 0.0,
        with_gru_head: gru,
        gru_input: hidden,
        conditioning: Conditioning::Document,
    }
}

/// Ids `NUM_SPECIALS..NUM_SPECIALS + n_stop` are stop words; the rest form the topic
/// vocabulary.
pub fn tiny_tglm(kind: TglmKind, vocab: usize, k: usize, hidden: usize, n_stop: usize, seed: u64) -> TopicGuidedLm<f64> {
    let cfg = TglmConfig {
        kind,
        lm: tiny_lm(vocab, hidden, 3, kind == TglmKind::Tdlm),
        k,
        enc_hidden: 5,
        stop_hidden: 4,
        window: 4,
        top_m: None,
    };
    let first = (NUM_SPECIALS + n_stop) as u32;
    let tv = TopicVocab::from_ids(vocab, &(first..vocab as u32).collect::<Vec<_>>()).unwrap();
    let stops: HashSet<u32> = (NUM_SPECIALS as u32..first).collect();
    TopicGuidedLm::new(&cfg, &tv, &stops, &Rng::new(seed)).unwrap()
}

/// Redraws every parameter uniformly in `[-scale, scale]`.
pub fn randomize(ps: &mut tglm_core::numerics::ParamSet<f64>, scale: f64, rng: &mut Rng) {
    for id in ps.ids().collect::<Vec<_>>() {
        ps.get_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.uniform_range(-scale, scale));
    }
}
