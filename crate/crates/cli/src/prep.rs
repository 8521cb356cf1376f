//! Preprocessing: vocabularies, topic vocabularies, bag-of-words caches and the
//! manifest that later stages check their inputs against.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tglm_core::corpus::{
    bag_of_words, encode_corpus, read_corpus, write_bow_cache, CountVector, Document, RawDoc, TopicVocab,
    Vocabulary,
};
use tglm_core::Error;

use crate::config::{hex16, RunConfig};
use crate::error::{CliError, CliResult};

/// The bundled English stop list, used when `stop_list` is unset.
pub const DEFAULT_STOP_LIST: &str = include_str!("../../../data/stopwords_en.txt");

pub const MANIFEST: &str = "manifest.txt";

fn sha_hex(bytes: &[u8]) -> String {
    hex16(&Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Stop words from the configured list (`none` for an empty list).
pub fn load_stop_list(cfg: &RunConfig) -> CliResult<(HashSet<String>, String)> {
    let text = match cfg.get("stop_list") {
        "" => DEFAULT_STOP_LIST.to_string(),
        "none" => String::new(),
        p => String::from_utf8_lossy(&read_bytes(Path::new(p))?).into_owned(),
    };
    let words = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    Ok((words, sha_hex(text.as_bytes())))
}

/// Corpus file locations: config values, resolved against `corpus_dir` when relative.
pub fn corpus_paths(cfg: &RunConfig, corpus_dir: Option<&Path>) -> [PathBuf; 3] {
    ["corpus.train", "corpus.valid", "corpus.test"].map(|k| {
        let p = PathBuf::from(cfg.get(k));
        match corpus_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p,
        }
    })
}

/// Everything downstream stages need, loaded from a preprocessing directory.
pub struct Prepared {
    pub dir: PathBuf,
    pub manifest: BTreeMap<String, String>,
    pub vocab: Vocabulary,
    /// Stop list and frequency filter only (LDA, TDLM, coherence).
    pub tv: TopicVocab,
    /// Additionally filtered by document frequency (TopicRNN, VRTM).
    pub tv_df: TopicVocab,
    pub stop_ids: HashSet<u32>,
    pub train: Vec<Document>,
    pub valid: Vec<Document>,
    pub test: Vec<Document>,
}

impl Prepared {
    pub fn prep_hash(&self) -> &str {
        &self.manifest["prep_hash"]
    }

    pub fn vocab_hash(&self) -> &str {
        &self.manifest["vocab_hash"]
    }

    /// Every split, in order; the reference corpus for coherence.
    pub fn all_docs(&self) -> Vec<Document> {
        [&self.train, &self.valid, &self.test].into_iter().flatten().cloned().collect()
    }

    /// Reads a preprocessing directory and re-encodes the corpora it names, refusing
    /// corpora that changed since preprocessing.
    pub fn load(dir: &Path) -> CliResult<Self> {
        let mpath = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&mpath).map_err(|e| CliError::io(&mpath, e))?;
        let manifest: BTreeMap<String, String> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let need = |k: &str| {
            manifest
                .get(k)
                .cloned()
                .ok_or_else(|| CliError::Core(Error::Format(format!("{}: missing {k}", mpath.display()))))
        };
        let vocab = Vocabulary::read(&dir.join("vocab.txt"), &dir.join("vocab_counts.tsv"))?;
        if vocab.hash() != need("vocab_hash")? {
            return Err(Error::Contract(format!("{}: vocabulary does not match its manifest", dir.display())).into());
        }
        let tv = TopicVocab::read(&dir.join("topic_vocab.txt"), &vocab)?;
        let tv_df = TopicVocab::read(&dir.join("topic_vocab_df.txt"), &vocab)?;
        let stop_ids = std::fs::read_to_string(dir.join("stop_ids.txt"))
            .map_err(|e| CliError::io(&dir.join("stop_ids.txt"), e))?
            .lines()
            .map(|l| l.parse::<u32>().map_err(|_| CliError::Core(Error::Format("bad stop id".into()))))
            .collect::<CliResult<HashSet<u32>>>()?;
        let sep = need("sentence_separator")?;
        let mut splits = Vec::new();
        let mut first = 0u32;
        for name in ["train", "valid", "test"] {
            let path = PathBuf::from(need(&format!("{name}.path"))?);
            if sha_hex(&read_bytes(&path)?) != need(&format!("{name}.sha"))? {
                return Err(Error::Contract(format!(
                    "{} changed since preprocessing; rerun preprocess",
                    path.display()
                ))
                .into());
            }
            let raw = read_corpus(&path, &sep)?;
            let docs = encode_corpus(&raw, &vocab, first);
            first += docs.len() as u32;
            splits.push(docs);
        }
        let test = splits.pop().unwrap();
        let valid = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(Prepared {
            dir: dir.to_path_buf(),
            manifest,
            vocab,
            tv,
            tv_df,
            stop_ids,
            train,
            valid,
            test,
        })
    }
}

fn num_tokens(raw: &[RawDoc]) -> usize {
    raw.iter().map(RawDoc::num_tokens).sum()
}

/// Builds every preprocessing artifact in `out` from the configured corpora. Output is
/// a pure function of the inputs and the configuration.
pub fn run_preprocess(cfg: &RunConfig, corpus_dir: Option<&Path>, out: &Path) -> CliResult<Prepared> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let sep = cfg.get("sentence_separator").to_string();
    let paths = corpus_paths(cfg, corpus_dir);
    let mut raws = Vec::new();
    let mut shas = Vec::new();
    let paths: Vec<PathBuf> = paths
        .iter()
        .map(|p| p.canonicalize().map_err(|e| CliError::io(p, e)))
        .collect::<CliResult<_>>()?;
    for p in &paths {
        let bytes = read_bytes(p)?;
        shas.push(sha_hex(&bytes));
        raws.push(read_corpus(p, &sep)?);
    }
    let min_count: usize = cfg.parse("min_count")?;
    let top_frac: f64 = cfg.parse("top_frac")?;
    let min_doc_frac: f64 = cfg.parse("min_doc_frac")?;
    if !(0.0..=1.0).contains(&min_doc_frac) {
        return Err(CliError::Usage(format!("min_doc_frac must lie in [0, 1], got {min_doc_frac}")));
    }
    let vocab = Vocabulary::build(&raws[0], min_count)?;
    let (stop, stop_sha) = load_stop_list(cfg)?;
    let min_doc_freq = ((min_doc_frac * raws[0].len() as f64).ceil() as u64).max(1);
    let tv = TopicVocab::build(&vocab, &stop, top_frac, 0)?;
    let tv_df = TopicVocab::build(&vocab, &stop, top_frac, min_doc_freq)?;
    if tv.is_empty() || tv_df.is_empty() {
        return Err(CliError::Usage("topic vocabulary is empty after filtering".into()));
    }
    let stop_ids: Vec<u32> = (0..vocab.len() as u32)
        .filter(|&i| tv.exclusion(i).stop_word)
        .collect();

    vocab.write(&out.join("vocab.txt"))?;
    vocab.write_counts(&out.join("vocab_counts.tsv"))?;
    tv.write(&out.join("topic_vocab.txt"), &vocab)?;
    tv_df.write(&out.join("topic_vocab_df.txt"), &vocab)?;
    write_text(&out.join("stop_ids.txt"), &stop_ids.iter().map(|i| format!("{i}\n")).collect::<String>())?;

    let mut first = 0u32;
    let mut m: BTreeMap<String, String> = BTreeMap::new();
    for (i, name) in ["train", "valid", "test"].iter().enumerate() {
        let docs = encode_corpus(&raws[i], &vocab, first);
        m.insert(format!("{name}.path"), paths[i].display().to_string());
        m.insert(format!("{name}.sha"), shas[i].clone());
        m.insert(format!("{name}.docs"), format!("{}..{}", first, first as usize + docs.len()));
        m.insert(format!("{name}.tokens"), num_tokens(&raws[i]).to_string());
        for (suffix, t) in [("", &tv), ("_df", &tv_df)] {
            let bags: Vec<CountVector> = docs.iter().map(|d| bag_of_words(d, t, None)).collect::<Result<_, _>>()?;
            write_bow_cache(&out.join(format!("bow_{name}{suffix}.bin")), &bags)?;
        }
        first += docs.len() as u32;
    }
    let settings = format!(
        "min_count={min_count}\ntop_frac={top_frac}\nmin_doc_freq={min_doc_freq}\nsentence_separator={sep}\nstop_list={stop_sha}\n"
    );
    let prep_hash = sha_hex(format!("{settings}{}\n", shas.join(",")).as_bytes());
    m.insert("min_count".into(), min_count.to_string());
    m.insert("top_frac".into(), top_frac.to_string());
    m.insert("min_doc_freq".into(), min_doc_freq.to_string());
    m.insert("sentence_separator".into(), sep.clone());
    m.insert("stop_list.sha".into(), stop_sha);
    m.insert("vocab_size".into(), vocab.len().to_string());
    m.insert("vocab_hash".into(), vocab.hash());
    m.insert("topic_vocab_size".into(), tv.len().to_string());
    m.insert("topic_vocab_hash".into(), tv.hash());
    m.insert("topic_vocab_df_size".into(), tv_df.len().to_string());
    m.insert("topic_vocab_df_hash".into(), tv_df.hash());
    m.insert("prep_hash".into(), prep_hash);
    let text: String = m.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_text(&out.join(MANIFEST), &text)?;
    Prepared::load(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tglm_core::corpus::{FUNCTION_WORDS, SENTENCE_END};

    #[test]
    fn bundled_list_covers_synthetic_function_words() {
        let (words, _) = load_stop_list(&RunConfig::default()).unwrap();
        for w in FUNCTION_WORDS.iter().chain([&SENTENCE_END]) {
            assert!(words.contains(*w), "{w}");
        }
        let mut cfg = RunConfig::default();
        cfg.set("stop_list", "none").unwrap();
        assert!(load_stop_list(&cfg).unwrap().0.is_empty());
    }
}
