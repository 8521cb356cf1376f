use std::collections::HashSet;
use std::path::Path;

use super::document::{write_corpus, RawDoc, DEFAULT_SENTENCE_SEPARATOR};
use crate::error::{arg_err, Error, Result};
use crate::numerics::{sample_weighted, Rng};

/// High-frequency function words injected into every synthetic document, most frequent
/// first.
pub const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "is", "that", "it", "was", "for", "on", "are", "as",
    "with", "his", "they", "at", "be", "this", "from", "have", "or", "by", "had", "but",
    "not", "what", "all", "were", "when", "we", "there", "can", "an", "which", "their",
    "if", "will", "about",
];

/// Token closing every synthetic sentence; listed last among the function words.
pub const SENTENCE_END: &str = ".";

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Number of topics.
    pub k: usize,
    /// Vocabulary size (function words plus topic words).
    pub v: usize,
    /// Documents across all splits.
    pub docs: usize,
    pub doc_len: usize,
    /// Inverse Dirichlet concentration; `f64::INFINITY` gives one topic per document.
    pub topic_sharpness: f64,
    /// 0: topic words drawn independently; 1: topic-specific bigram chains.
    pub syntax_order: u8,
    pub function_rate: f64,
    pub chain_prob: f64,
    pub successors: usize,
    pub leak: f64,
    pub zipf_exponent: f64,
    pub sentence_len: (usize, usize),
    pub valid_frac: f64,
    pub test_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k: 10,
            v: 600,
            docs: 200,
            doc_len: 500,
            topic_sharpness: 10.0,
            syntax_order: 1,
            function_rate: 0.3,
            chain_prob: 0.7,
            successors: 3,
            leak: 0.05,
            zipf_exponent: 0.8,
            sentence_len: (6, 16),
            valid_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if self.k < 2 {
            return Err(arg_err!("synthetic corpus needs K >= 2, got {}", self.k));
        }
        if self.v < 3 * self.k {
            return Err(arg_err!("synthetic corpus needs V >= 3K, got V={} K={}", self.v, self.k));
        }
        if self.syntax_order > 1 {
            return Err(arg_err!("syntax_order must be 0 or 1, got {}", self.syntax_order));
        }
        if self.docs == 0 || self.doc_len == 0 {
            return Err(arg_err!("docs and doc_len must be positive"));
        }
        if self.topic_sharpness.is_nan() || self.topic_sharpness <= 0.0 {
            return Err(arg_err!("topic_sharpness must be positive"));
        }
        if !unit(self.function_rate) || !unit(self.chain_prob) || !unit(self.leak) {
            return Err(arg_err!("function_rate, chain_prob and leak must lie in [0, 1)"));
        }
        if !unit(self.valid_frac) || !unit(self.test_frac) || self.valid_frac + self.test_frac >= 1.0
        {
            return Err(arg_err!("split fractions must leave a non-empty training share"));
        }
        let (lo, hi) = self.sentence_len;
        if lo == 0 || lo > hi {
            return Err(arg_err!("invalid sentence length range {lo}..={hi}"));
        }
        if self.successors == 0 {
            return Err(arg_err!("successors must be positive"));
        }
        Ok(())
    }

    pub fn num_function_words(&self) -> usize {
        (self.v / 5).clamp(2, FUNCTION_WORDS.len() + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSplit {
    pub name: &'static str,
    pub docs: Vec<RawDoc>,
    /// Ground-truth topic proportions, one row per document.
    pub theta: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub train: SynthSplit,
    pub valid: SynthSplit,
    pub test: SynthSplit,
    pub function_words: Vec<String>,
    /// All topic words; `blocks[k]` indexes into this list.
    pub topic_words: Vec<String>,
    pub blocks: Vec<Vec<usize>>,
    /// Fresh-draw distribution of topic `k` over `topic_words`.
    pub topic_word_dist: Vec<Vec<f64>>,
}

impl SynthCorpus {
    pub fn splits(&self) -> [&SynthSplit; 3] {
        [&self.train, &self.valid, &self.test]
    }

    pub fn num_tokens(&self) -> usize {
        self.splits()
            .iter()
            .flat_map(|s| &s.docs)
            .map(RawDoc::num_tokens)
            .sum()
    }

    /// Writes `{train,valid,test}.txt`, `theta_{split}.tsv`, `stopwords.txt` and
    /// `topics.tsv` (one line per topic: its block of words).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in self.splits() {
            write_corpus(
                &dir.join(format!("{}.txt", s.name)),
                &s.docs,
                DEFAULT_SENTENCE_SEPARATOR,
            )?;
            let tsv: String = s
                .theta
                .iter()
                .map(|t| {
                    let cols: Vec<String> = t.iter().map(|x| format!("{x:.6}")).collect();
                    cols.join("\t") + "\n"
                })
                .collect();
            let p = dir.join(format!("theta_{}.tsv", s.name));
            std::fs::write(&p, tsv).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("stopwords.txt");
        std::fs::write(&p, self.function_words.join("\n") + "\n").map_err(|e| Error::io(&p, e))?;
        let topics: String = self
            .blocks
            .iter()
            .map(|b| {
                let ws: Vec<&str> = b.iter().map(|&i| self.topic_words[i].as_str()).collect();
                ws.join("\t") + "\n"
            })
            .collect();
        let p = dir.join("topics.tsv");
        std::fs::write(&p, topics).map_err(|e| Error::io(&p, e))
    }
}

fn pseudo_words(n: usize, rng: &mut Rng) -> Vec<String> {
    let syllable = |rng: &mut Rng| {
        let c = CONSONANTS[rng.below(CONSONANTS.len())] as char;
        let v = VOWELS[rng.below(VOWELS.len())] as char;
        format!("{c}{v}")
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..3).map(|_| syllable(rng)).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn zipf(n: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

struct Generator<'c> {
    cfg: &'c SynthConfig,
    function_dist: Vec<f64>,
    block_dist: Vec<f64>,
    blocks: Vec<Vec<usize>>,
    successors: Vec<Vec<usize>>,
    n_topic_words: usize,
}

impl Generator<'_> {
    fn fresh_topic_word(&self, k: usize, rng: &mut Rng) -> usize {
        if rng.uniform() < self.cfg.leak {
            return rng.below(self.n_topic_words);
        }
        let b = &self.blocks[k];
        b[sample_weighted(&self.block_dist[..b.len()], self.block_mass(b.len()), rng)]
    }

    fn block_mass(&self, len: usize) -> f64 {
        self.block_dist[..len].iter().sum()
    }

    fn document(
        &self,
        theta: &[f64],
        fwords: &[String],
        twords: &[String],
        rng: &mut Rng,
    ) -> RawDoc {
        let (lo, hi) = self.cfg.sentence_len;
        let mut remaining = self.cfg.doc_len;
        let mut sentences = Vec::new();
        while remaining > 0 {
            let len = (lo + rng.below(hi - lo + 1)).min(remaining);
            remaining -= len;
            let mut prev: Option<usize> = None;
            let mut sentence = Vec::with_capacity(len);
            for _ in 1..len {
                if rng.uniform() < self.cfg.function_rate {
                    sentence.push(fwords[sample_weighted(&self.function_dist, 1.0, rng)].clone());
                    continue;
                }
                let w = match prev {
                    Some(p) if self.cfg.syntax_order == 1 && rng.uniform() < self.cfg.chain_prob => {
                        let succ = &self.successors[p];
                        succ[rng.below(succ.len())]
                    }
                    _ => self.fresh_topic_word(sample_weighted(theta, 1.0, rng), rng),
                };
                prev = Some(w);
                sentence.push(twords[w].clone());
            }
            sentence.push(SENTENCE_END.to_string());
            sentences.push(sentence);
        }
        RawDoc { sentences }
    }
}

/// Generates a topical corpus with known topic proportions.
///
/// Topic words are split into K contiguous blocks. Each token is a function word or a
/// topic word; a fresh topic word draws its topic from the document's θ and then a word
/// from that topic's block (Zipf-weighted, with a small leak to any topic word). With
/// `syntax_order = 1`, a topic word is usually followed by one of a few fixed successors
/// from the same block, and chains restart at every sentence. Every sentence ends with
/// [`SENTENCE_END`], which counts towards both `doc_len` and `v`.
pub fn generate_synthetic_corpus(cfg: &SynthConfig, rng: &Rng) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut vocab_rng = rng.substream("synth.vocab");
    let n_func = cfg.num_function_words();
    let n_topic = cfg.v - n_func;
    let function_words: Vec<String> = FUNCTION_WORDS[..n_func - 1]
        .iter()
        .copied()
        .chain([SENTENCE_END])
        .map(str::to_string)
        .collect();
    let topic_words = pseudo_words(n_topic, &mut vocab_rng);

    let base = n_topic / cfg.k;
    let mut blocks = Vec::with_capacity(cfg.k);
    let mut start = 0;
    for k in 0..cfg.k {
        let len = base + usize::from(k < n_topic % cfg.k);
        blocks.push((start..start + len).collect::<Vec<_>>());
        start += len;
    }
    let block_dist = zipf(base + 1, cfg.zipf_exponent);
    let mut successors = vec![Vec::new(); n_topic];
    for b in &blocks {
        for &w in b {
            successors[w] = (0..cfg.successors).map(|_| b[vocab_rng.below(b.len())]).collect();
        }
    }
    let gen = Generator {
        cfg,
        function_dist: zipf(n_func - 1, 1.0),
        block_dist,
        blocks,
        successors,
        n_topic_words: n_topic,
    };

    let topic_word_dist = gen
        .blocks
        .iter()
        .map(|b| {
            let mass = gen.block_mass(b.len());
            let mut d = vec![cfg.leak / n_topic as f64; n_topic];
            for (r, &w) in b.iter().enumerate() {
                d[w] += (1.0 - cfg.leak) * gen.block_dist[r] / mass;
            }
            d
        })
        .collect();

    let n_valid = (cfg.docs as f64 * cfg.valid_frac).round() as usize;
    let n_test = (cfg.docs as f64 * cfg.test_frac).round() as usize;
    let n_train = cfg.docs - n_valid - n_test;
    let split = |name: &'static str, n: usize| {
        let mut theta_rng = rng.substream(&format!("synth.{name}.theta"));
        let mut doc_rng = rng.substream(&format!("synth.{name}.docs"));
        let mut docs = Vec::with_capacity(n);
        let mut thetas = Vec::with_capacity(n);
        for _ in 0..n {
            let theta = if cfg.topic_sharpness.is_infinite() {
                let mut t = vec![0.0; cfg.k];
                t[theta_rng.below(cfg.k)] = 1.0;
                t
            } else {
                theta_rng.dirichlet(&vec![1.0 / cfg.topic_sharpness; cfg.k])
            };
            docs.push(gen.document(&theta, &function_words, &topic_words, &mut doc_rng));
            thetas.push(theta);
        }
        SynthSplit {
            name,
            docs,
            theta: thetas,
        }
    };
    let train = split("train", n_train);
    let valid = split("valid", n_valid);
    let test = split("test", n_test);
    Ok(SynthCorpus {
        config: cfg.clone(),
        train,
        valid,
        test,
        function_words,
        topic_words,
        blocks: gen.blocks,
        topic_word_dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_token_count() {
        let cfg = SynthConfig {
            docs: 20,
            doc_len: 53,
            v: 120,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&cfg, &Rng::new(1)).unwrap();
        assert_eq!(c.num_tokens(), 20 * 53);
        assert_eq!(c.train.docs.len() + c.valid.docs.len() + c.test.docs.len(), 20);
        for d in &c.train.docs {
            assert!(d.sentences.iter().all(|s| s.len() <= 16));
            assert!(d.sentences.iter().all(|s| s.last().map(String::as_str) == Some(SENTENCE_END)));
        }
    }

    #[test]
    fn infinite_sharpness_uses_one_block() {
        let cfg = SynthConfig {
            k: 2,
            v: 30,
            docs: 10,
            doc_len: 80,
            topic_sharpness: f64::INFINITY,
            leak: 0.0,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&cfg, &Rng::new(5)).unwrap();
        for (doc, theta) in c.train.docs.iter().zip(&c.train.theta) {
            let k = theta.iter().position(|&x| x == 1.0).unwrap();
            let block: HashSet<&str> = c.blocks[k].iter().map(|&i| c.topic_words[i].as_str()).collect();
            for t in doc.tokens() {
                assert!(block.contains(t) || c.function_words.iter().any(|f| f == t), "{t}");
            }
        }
    }

    #[test]
    fn topic_word_dists_are_distributions() {
        let c = generate_synthetic_corpus(&SynthConfig::default(), &Rng::new(2)).unwrap();
        for d in &c.topic_word_dist {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let words: HashSet<&String> = c.topic_words.iter().chain(&c.function_words).collect();
        assert_eq!(words.len(), c.config.v);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig { k: 1, ..Default::default() },
            SynthConfig { k: 10, v: 29, ..Default::default() },
            SynthConfig { syntax_order: 2, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(
                generate_synthetic_corpus(&cfg, &Rng::new(0)),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { docs: 5, doc_len: 40, ..Default::default() };
        let a = generate_synthetic_corpus(&cfg, &Rng::new(9)).unwrap();
        let b = generate_synthetic_corpus(&cfg, &Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
