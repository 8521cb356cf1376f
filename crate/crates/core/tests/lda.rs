mod common;

use std::collections::HashSet;

use common::oracles::lda_enumeration;
use tglm_core::checkpoint::Checkpoint;
use tglm_core::corpus::{
    bag_of_words, encode_corpus, generate_synthetic_corpus, CountVector, Document, RawDoc, SynthConfig, SynthCorpus,
    TopicVocab, Vocabulary,
};
use tglm_core::lda::{gibbs_train, lda_next_word, lda_predict_doc, GibbsState, LdaConfig, LdaModel};
use tglm_core::Rng;

fn bag(doc_id: u32, counts: Vec<u32>) -> CountVector {
    CountVector {
        doc_id,
        excluded_sentence: None,
        counts,
    }
}

fn counts_of(words: &[usize], v: usize) -> Vec<u32> {
    let mut c = vec![0; v];
    words.iter().for_each(|&w| c[w] += 1);
    c
}

fn quick(k: usize, iterations: usize) -> LdaConfig {
    LdaConfig {
        iterations,
        ..LdaConfig::mallet(k)
    }
}

#[test]
fn gibbs_matches_exhaustive_enumeration() {
    // word ids sorted within each document, matching the sampler's token order
    let docs = vec![vec![0, 0, 1, 2], vec![1, 2, 2, 2]];
    let (v, k) = (3, 2);
    let cfg = LdaConfig {
        k,
        alpha: 1.0,
        beta_hyper: 0.5,
        ..LdaConfig::mallet(k)
    };
    let bows: Vec<CountVector> = docs.iter().enumerate().map(|(d, w)| bag(d as u32, counts_of(w, v))).collect();
    let (exact, same) = lda_enumeration(&docs, v, k, cfg.alpha_k(), cfg.beta_hyper);

    let mut rng = Rng::new(11);
    let mut st = GibbsState::new(&bows, &cfg, &mut rng).unwrap();
    let n = 8;
    let sweeps = 50_000;
    let mut marg = vec![vec![0.0; k]; n];
    let mut co = vec![vec![0.0; n]; n];
    for _ in 0..sweeps {
        st.sweep(&mut rng);
        let z: Vec<usize> = st.z.iter().flatten().map(|&t| t as usize).collect();
        for i in 0..n {
            marg[i][z[i]] += 1.0 / sweeps as f64;
            for j in 0..n {
                if z[i] == z[j] {
                    co[i][j] += 1.0 / sweeps as f64;
                }
            }
        }
    }
    assert!(st.counts_consistent());
    for i in 0..n {
        let tv: f64 = 0.5 * (0..k).map(|t| (marg[i][t] - exact[i][t]).abs()).sum::<f64>();
        assert!(tv <= 0.02, "token {i}: TV {tv}");
        for j in 0..n {
            assert!((co[i][j] - same[i][j]).abs() <= 0.02, "pair ({i},{j}): {} vs {}", co[i][j], same[i][j]);
        }
    }
}

#[test]
fn counts_stay_consistent_after_every_sweep() {
    let mut rng = Rng::new(2);
    let bows: Vec<CountVector> = (0..6)
        .map(|d| bag(d, (0..7).map(|_| rng.below(4) as u32).collect()))
        .collect();
    let mut st = GibbsState::new(&bows, &quick(3, 1), &mut rng).unwrap();
    for _ in 0..50 {
        st.sweep(&mut rng);
        assert!(st.counts_consistent());
    }
}

#[test]
fn single_topic_predicts_its_topic_for_any_prefix() {
    let bows = vec![bag(0, vec![3, 1, 0, 2]), bag(1, vec![0, 4, 1, 1])];
    let cfg = quick(1, 5);
    let m = gibbs_train(&bows, &cfg, &Rng::new(0)).unwrap();
    let totals = [3.0, 5.0, 1.0, 3.0];
    for w in 0..4 {
        assert!((m.topic(0)[w] - (totals[w] + 0.01) / (12.0 + 0.04)).abs() < 1e-12);
    }
    let mut rng = Rng::new(1);
    for prefix in [vec![0, 0, 0, 0], vec![1, 0, 0, 0], vec![0, 0, 5, 2]] {
        let p = lda_next_word(&m, &bag(9, prefix), &mut rng);
        for w in 0..4 {
            assert!((p[w] - m.topic(0)[w]).abs() < 1e-12);
        }
    }
}

#[test]
fn top_word_of_toy_corpus() {
    let raw = vec![RawDoc::parse_line("a a a b", "\n")];
    let vocab = Vocabulary::build(&raw, 1).unwrap();
    let tv = TopicVocab::build(&vocab, &HashSet::new(), 0.0, 0).unwrap();
    let docs = encode_corpus(&raw, &vocab, 0);
    let bows = vec![bag_of_words(&docs[0], &tv, None).unwrap()];
    let m = gibbs_train(&bows, &quick(1, 10), &Rng::new(0)).unwrap();
    let top = m.top_words(0, 1);
    assert_eq!(vocab.token(tv.ids()[top[0]]), "a");
    let mut all = m.top_words(0, tv.len());
    all.sort();
    assert_eq!(all, (0..tv.len()).collect::<Vec<_>>());
}

struct Pipeline {
    corpus: SynthCorpus,
    vocab: Vocabulary,
    tv: TopicVocab,
    train: Vec<Document>,
    bows: Vec<CountVector>,
}

fn pipeline(cfg: &SynthConfig, seed: u64) -> Pipeline {
    let corpus = generate_synthetic_corpus(cfg, &Rng::new(seed)).unwrap();
    let vocab = Vocabulary::build(&corpus.train.docs, 1).unwrap();
    let stop: HashSet<String> = corpus.function_words.iter().cloned().collect();
    let tv = TopicVocab::build(&vocab, &stop, 0.0, 0).unwrap();
    let train = encode_corpus(&corpus.train.docs, &vocab, 0);
    let bows = train.iter().map(|d| bag_of_words(d, &tv, None).unwrap()).collect();
    Pipeline {
        corpus,
        vocab,
        tv,
        train,
        bows,
    }
}

fn unigram_config(k: usize) -> SynthConfig {
    SynthConfig {
        k,
        v: 240,
        docs: 200,
        doc_len: 200,
        syntax_order: 0,
        ..SynthConfig::default()
    }
}

/// Learned topic mapped onto the generator's topic-word list.
fn on_topic_words(p: &Pipeline, m: &LdaModel, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; p.corpus.topic_words.len()];
    for (j, &id) in p.tv.ids().iter().enumerate() {
        let w = p.vocab.token(id);
        let pos = p.corpus.topic_words.iter().position(|t| t == w).expect("topic word");
        out[pos] = m.topic(k)[j];
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn recovers_synthetic_topics() {
    let k = 4;
    let p = pipeline(&unigram_config(k), 5);
    let m = gibbs_train(&p.bows, &quick(k, 300), &Rng::new(1)).unwrap();
    let learned: Vec<Vec<f64>> = (0..k).map(|t| on_topic_words(&p, &m, t)).collect();
    let tv = |a: &[f64], b: &[f64]| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let best = permutations(k)
        .iter()
        .map(|perm| (0..k).map(|t| tv(&learned[perm[t]], &p.corpus.topic_word_dist[t])).sum::<f64>() / k as f64)
        .fold(f64::INFINITY, f64::min);
    assert!(best <= 0.2, "mean matched TV {best}");
}

#[test]
fn block_prefix_predicts_its_block() {
    let k = 4;
    let mut cfg = unigram_config(k);
    cfg.topic_sharpness = 50.0;
    let p = pipeline(&cfg, 8);
    let m = gibbs_train(&p.bows, &quick(k, 200), &Rng::new(2)).unwrap();
    let block: HashSet<&str> = p.corpus.blocks[2].iter().map(|&w| p.corpus.topic_words[w].as_str()).collect();
    let mut prefix = CountVector::zeros(0, p.tv.len());
    for (j, &id) in p.tv.ids().iter().enumerate().take(60) {
        if block.contains(p.vocab.token(id)) {
            prefix.counts[j] = 2;
        }
    }
    assert!(prefix.total() > 0);
    let out = lda_next_word(&m, &prefix, &mut Rng::new(3));
    assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let arg = (0..out.len()).max_by(|&a, &b| out[a].total_cmp(&out[b]).then(b.cmp(&a))).unwrap();
    assert!(block.contains(p.vocab.token(p.tv.ids()[arg])));
}

#[test]
fn training_is_deterministic_and_order_free() {
    let cfg = SynthConfig {
        docs: 30,
        doc_len: 60,
        ..unigram_config(3)
    };
    let p = pipeline(&cfg, 3);
    let a = gibbs_train(&p.bows, &quick(3, 30), &Rng::new(4)).unwrap();
    let b = gibbs_train(&p.bows, &quick(3, 30), &Rng::new(4)).unwrap();
    assert_eq!(a.beta, b.beta);

    let mut rng = Rng::new(6);
    let shuffled: Vec<RawDoc> = p
        .corpus
        .train
        .docs
        .iter()
        .map(|d| {
            let mut toks: Vec<String> = d.tokens().map(String::from).collect();
            rng.shuffle(&mut toks);
            RawDoc { sentences: vec![toks] }
        })
        .collect();
    let docs = encode_corpus(&shuffled, &p.vocab, 0);
    let bows: Vec<CountVector> = docs.iter().map(|d| bag_of_words(d, &p.tv, None).unwrap()).collect();
    assert_eq!(bows, p.bows);
    let c = gibbs_train(&bows, &quick(3, 30), &Rng::new(4)).unwrap();
    assert_eq!(a.beta, c.beta);
    for t in 0..3 {
        assert!((a.topic(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn prediction_is_causal_and_normalised_at_every_prefix() {
    let cfg = SynthConfig {
        docs: 20,
        doc_len: 50,
        ..unigram_config(3)
    };
    let p = pipeline(&cfg, 9);
    let mut lc = quick(3, 20);
    lc.predict_burnin = 5;
    lc.predict_samples = 3;
    lc.predict_spacing = 2;
    let m = gibbs_train(&p.bows, &lc, &Rng::new(0)).unwrap();
    let doc = &p.train[0];
    let base = lda_predict_doc(&m, doc, &p.tv, 4, 17).unwrap();
    assert_eq!(base.len(), doc.num_predictions());
    for d in &base {
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let mut rng = Rng::new(5);
    for _ in 0..10 {
        let pos = 1 + rng.below(doc.len() - 2);
        let mut mutated = doc.clone();
        for t in pos..doc.len() {
            mutated.token_ids[t] = p.tv.ids()[rng.below(p.tv.len())];
        }
        let after = lda_predict_doc(&m, &mutated, &p.tv, 4, 17).unwrap();
        assert_eq!(base[..pos], after[..pos]);
    }
    assert!(lda_predict_doc(&m, doc, &p.tv, 0, 17).is_err());
    let empty = lda_next_word(&m, &CountVector::zeros(0, p.tv.len()), &mut rng);
    let uniform = m.mixture(&[1.0 / 3.0; 3]);
    assert_eq!(empty, uniform);
}

#[test]
fn empty_documents_are_skipped_and_empty_corpora_rejected() {
    let bows = vec![bag(0, vec![0, 0, 0]), bag(1, vec![1, 2, 0])];
    let st = GibbsState::new(&bows, &quick(2, 1), &mut Rng::new(0)).unwrap();
    assert_eq!(st.words.len(), 1);
    assert!(gibbs_train(&[bag(0, vec![0, 0])], &quick(2, 1), &Rng::new(0)).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let bows = vec![bag(0, vec![3, 1, 0, 2]), bag(1, vec![0, 4, 1, 1])];
    let m = gibbs_train(&bows, &quick(2, 20), &Rng::new(0)).unwrap();
    let ck = Checkpoint::from_bytes(&m.to_checkpoint("").to_bytes()).unwrap();
    assert_eq!(LdaModel::from_checkpoint(&ck).unwrap(), m);
}
