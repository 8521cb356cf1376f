use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use tglm_core::corpus::{
    bag_of_words, batch_sequences, encode_corpus, generate_synthetic_corpus, read_corpus, read_stop_list,
    Conditioning, RawDoc, SynthConfig, TopicVocab, Vocabulary, DEFAULT_SENTENCE_SEPARATOR, NUM_SPECIALS,
    UNK_ID,
};
use tglm_core::Rng;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn sample_train() -> Vec<RawDoc> {
    read_corpus(&data_dir().join("sample/train.txt"), DEFAULT_SENTENCE_SEPARATOR).unwrap()
}

/// Word counts straight from the file text.
fn raw_counts() -> HashMap<String, usize> {
    let text = std::fs::read_to_string(data_dir().join("sample/train.txt")).unwrap();
    let mut counts = HashMap::new();
    for w in text.split_whitespace().filter(|w| *w != "</s>") {
        *counts.entry(w.to_string()).or_insert(0) += 1;
    }
    counts
}

#[test]
fn sample_vocabulary_size_matches_direct_count() {
    let raw = sample_train();
    let counts = raw_counts();
    for min_count in [1, 2, 5, 10] {
        let v = Vocabulary::build(&raw, min_count).unwrap();
        let expected = counts.values().filter(|&&c| c >= min_count).count() + NUM_SPECIALS;
        assert_eq!(v.len(), expected, "min_count {min_count}");
    }
}

#[test]
fn sample_topic_vocabulary_matches_set_difference() {
    let raw = sample_train();
    let vocab = Vocabulary::build(&raw, 1).unwrap();
    let stop = read_stop_list(&data_dir().join("stopwords_en.txt")).unwrap();
    let counts = raw_counts();
    let mut by_freq: Vec<(&String, &usize)> = counts.iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for top_frac in [0.0, 0.001, 0.05] {
        let n_top = (top_frac * by_freq.len() as f64).ceil() as usize;
        let top: HashSet<&String> = by_freq.iter().take(n_top).map(|p| p.0).collect();
        let kept: HashSet<&String> = counts.keys().filter(|w| !stop.contains(*w) && !top.contains(w)).collect();
        let tv = TopicVocab::build(&vocab, &stop, top_frac, 0).unwrap();
        assert_eq!(tv.len(), kept.len(), "top_frac {top_frac}");
        for &id in tv.ids() {
            assert!(kept.contains(&vocab.token(id).to_string()));
        }
    }
}

#[test]
fn threshold_edges() {
    let v = Vocabulary::from_tokens(&["a", "a", "b"], 2).unwrap();
    assert_eq!(v.len(), NUM_SPECIALS + 1);
    assert_eq!(v.id("b"), UNK_ID);
    assert_ne!(v.id("a"), UNK_ID);
    let all = Vocabulary::from_tokens(&["a", "a", "b"], 1).unwrap();
    assert_ne!(all.id("b"), UNK_ID);
    assert!(Vocabulary::from_tokens::<&str>(&[], 1).is_err());

    let none = TopicVocab::build(&all, &HashSet::new(), 0.0, 0).unwrap();
    assert_eq!(none.len(), all.len() - NUM_SPECIALS);
}

#[test]
fn most_frequent_type_is_excluded() {
    let mut tokens = vec!["the".to_string(); 2000];
    for i in 0..999 {
        tokens.push(format!("w{i}"));
    }
    let v = Vocabulary::from_tokens(&tokens, 1).unwrap();
    assert_eq!(v.len(), 1000 + NUM_SPECIALS);
    let tv = TopicVocab::build(&v, &HashSet::new(), 0.001, 0).unwrap();
    assert!(!tv.contains(v.id("the")));
    assert!(tv.exclusion(v.id("the")).too_frequent);
    assert_eq!(tv.len(), 999);
}

#[test]
fn excluded_sentence_bag_is_sum_of_others() {
    let raw = RawDoc::parse_line("x y z </s> y y w </s> z x x v", DEFAULT_SENTENCE_SEPARATOR);
    let vocab = Vocabulary::build(std::slice::from_ref(&raw), 1).unwrap();
    let stop: HashSet<String> = ["v".to_string()].into();
    let tv = TopicVocab::build(&vocab, &stop, 0.0, 0).unwrap();
    let doc = encode_corpus(std::slice::from_ref(&raw), &vocab, 0).remove(0);
    let count_sentence = |j: usize| {
        let mut c: BTreeMap<usize, u32> = BTreeMap::new();
        for w in &raw.sentences[j] {
            if let Some(i) = tv.index_of(vocab.id(w)) {
                *c.entry(i).or_insert(0) += 1;
            }
        }
        c
    };
    let mut expected = count_sentence(0);
    for (i, n) in count_sentence(2) {
        *expected.entry(i).or_insert(0) += n;
    }
    let bag = bag_of_words(&doc, &tv, Some(1)).unwrap();
    let got: BTreeMap<usize, u32> = bag.nonzeros().collect();
    assert_eq!(got, expected);
    assert_eq!(bag.total(), expected.values().map(|&n| n as u64).sum::<u64>());
    assert!(bag_of_words(&doc, &tv, Some(3)).is_err());

    let single = RawDoc::parse_line("x y z", DEFAULT_SENTENCE_SEPARATOR);
    let d1 = encode_corpus(std::slice::from_ref(&single), &vocab, 0).remove(0);
    assert_eq!(bag_of_words(&d1, &tv, Some(0)).unwrap().total(), 0);
    assert_eq!(bag_of_words(&d1, &tv, None).unwrap().total(), 3);
}

#[test]
fn batches_cover_every_prediction_once() {
    let raw = sample_train();
    let vocab = Vocabulary::build(&raw, 1).unwrap();
    let docs = encode_corpus(&raw, &vocab, 0);
    let expected: usize = raw.iter().map(|d| d.num_tokens() + 1).sum();
    for mode in [Conditioning::Document, Conditioning::Sentence] {
        for (l, b) in [(30, 64), (7, 3)] {
            let mut rng = Rng::new(4);
            let mut total = 0;
            let mut last: HashMap<usize, (u32, usize)> = HashMap::new();
            for batch in batch_sequences(&docs, l, b, Some(&mut rng), mode) {
                total += batch.num_targets();
                for row in &batch.rows {
                    if row.carryover {
                        assert!(row.offset > 0);
                        let (doc, end) = last[&row.lane];
                        assert_eq!(doc, row.doc_id);
                        assert_eq!(end, row.offset);
                    }
                    last.insert(row.lane, (row.doc_id, row.offset + row.len));
                }
            }
            assert_eq!(total, expected, "{mode:?} L={l} B={b}");
        }
    }
}

#[test]
fn synthetic_corpus_shape() {
    let cfg = SynthConfig {
        k: 2,
        v: 60,
        docs: 30,
        doc_len: 80,
        topic_sharpness: f64::INFINITY,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&cfg, &Rng::new(6)).unwrap();
    assert_eq!(c.num_tokens(), 30 * 80);
    let function: HashSet<&String> = c.function_words.iter().collect();
    let words = &c.topic_words;
    let block_of: HashMap<&String, usize> = c
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(k, b)| b.iter().map(move |&i| (&words[i], k)))
        .collect();
    for split in c.splits() {
        for (doc, theta) in split.docs.iter().zip(&split.theta) {
            let k = theta.iter().position(|&t| t == 1.0).expect("one topic per document");
            let topical: Vec<usize> = doc
                .tokens()
                .map(str::to_string)
                .filter(|w| !function.contains(w))
                .map(|w| block_of[&w])
                .collect();
            let own = topical.iter().filter(|&&b| b == k).count();
            assert!(own as f64 >= 0.85 * topical.len() as f64);
        }
    }
    let bad = SynthConfig { k: 10, v: 20, ..Default::default() };
    assert!(generate_synthetic_corpus(&bad, &Rng::new(0)).is_err());
}
