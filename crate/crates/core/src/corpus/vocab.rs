use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::RawDoc;
use crate::error::{arg_err, Error, Result};

pub const UNK: &str = "<unk>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";

pub const UNK_ID: u32 = 0;
pub const SOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const NUM_SPECIALS: usize = 3;

/// Token/id maps plus the training-split frequency tables used for topic-vocabulary
/// filtering. Specials occupy ids 0..3; remaining ids are ordered by descending
/// frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_count: usize,
    freq: Vec<u64>,
    doc_freq: Vec<u64>,
    num_docs: usize,
}

impl Vocabulary {
    /// Builds the vocabulary from training documents; tokens seen fewer than
    /// `min_count` times map to UNK.
    pub fn build(docs: &[RawDoc], min_count: usize) -> Result<Self> {
        let mut counts: HashMap<&str, (u64, u64)> = HashMap::new();
        let mut total = 0usize;
        for doc in docs {
            let mut seen: Vec<&str> = Vec::new();
            for tok in doc.tokens() {
                total += 1;
                let e = counts.entry(tok).or_insert((0, 0));
                e.0 += 1;
                seen.push(tok);
            }
            seen.sort_unstable();
            seen.dedup();
            for tok in seen {
                counts.get_mut(tok).unwrap().1 += 1;
            }
        }
        if total == 0 {
            return Err(arg_err!("cannot build a vocabulary from an empty token stream"));
        }

        let mut kept: Vec<(&str, u64, u64)> = counts
            .iter()
            .filter(|(t, (c, _))| *c as usize >= min_count.max(1) && !is_special(t))
            .map(|(t, &(c, d))| (*t, c, d))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let unk_freq: u64 = counts
            .iter()
            .filter(|(t, (c, _))| (*c as usize) < min_count.max(1) || is_special(t))
            .map(|(_, (c, _))| c)
            .sum();
        let n = docs.len() as u64;
        let mut tokens = vec![UNK.to_string(), SOS.to_string(), EOS.to_string()];
        let mut freq = vec![unk_freq, n, n];
        let mut doc_freq = vec![0, n, n];
        for (t, c, d) in kept {
            tokens.push(t.to_string());
            freq.push(c);
            doc_freq.push(d);
        }
        Ok(Self::assemble(tokens, min_count, freq, doc_freq, docs.len()))
    }

    /// Single-document convenience over a flat token stream.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], min_count: usize) -> Result<Self> {
        let doc = RawDoc {
            sentences: vec![tokens.iter().map(|s| s.as_ref().to_string()).collect()],
        };
        Self::build(std::slice::from_ref(&doc), min_count)
    }

    fn assemble(
        tokens: Vec<String>,
        min_count: usize,
        freq: Vec<u64>,
        doc_freq: Vec<u64>,
        num_docs: usize,
    ) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_count,
            freq,
            doc_freq,
            num_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn freq(&self, id: u32) -> u64 {
        self.freq[id as usize]
    }

    pub fn doc_freq(&self, id: u32) -> u64 {
        self.doc_freq[id as usize]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// Digest of the token list; checkpoints record it to refuse mismatched data.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex16(&h.finalize())
    }

    /// One token per line, line number = id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// `token \t freq \t doc_freq` per id, with a leading `#docs` line.
    pub fn write_counts(&self, path: &Path) -> Result<()> {
        let mut s = format!("#docs\t{}\t{}\n", self.num_docs, self.min_count);
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{}", t, self.freq[i], self.doc_freq[i]);
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Loads a vocabulary file and its companion counts file.
    pub fn read(vocab_path: &Path, counts_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_SPECIALS || tokens[..3] != [UNK, SOS, EOS] {
            return Err(Error::Format(format!(
                "{}: vocabulary must start with {UNK}, {SOS}, {EOS}",
                vocab_path.display()
            )));
        }
        let counts = std::fs::read_to_string(counts_path).map_err(|e| Error::io(counts_path, e))?;
        let mut lines = counts.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
        let bad = || Error::Format(format!("{}: malformed counts file", counts_path.display()));
        if header.len() != 3 || header[0] != "#docs" {
            return Err(bad());
        }
        let num_docs = header[1].parse().map_err(|_| bad())?;
        let min_count = header[2].parse().map_err(|_| bad())?;
        let mut freq = Vec::with_capacity(tokens.len());
        let mut doc_freq = Vec::with_capacity(tokens.len());
        for (line, tok) in lines.zip(&tokens) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 || f[0] != tok {
                return Err(bad());
            }
            freq.push(f[1].parse().map_err(|_| bad())?);
            doc_freq.push(f[2].parse().map_err(|_| bad())?);
        }
        if freq.len() != tokens.len() {
            return Err(bad());
        }
        Ok(Self::assemble(tokens, min_count, freq, doc_freq, num_docs))
    }
}

fn is_special(t: &str) -> bool {
    t == UNK || t == SOS || t == EOS
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_edge() {
        let v = Vocabulary::from_tokens(&["a", "a", "b"], 2).unwrap();
        assert_eq!(v.tokens(), &[UNK, SOS, EOS, "a"]);
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.freq(UNK_ID), 1);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let v = Vocabulary::from_tokens(&["x", "y", "y", "z"], 1).unwrap();
        for t in ["x", "y", "z"] {
            assert_ne!(v.id(t), UNK_ID);
        }
        assert_eq!(v.token(v.id("y")), "y");
        assert_eq!(v.id("y"), 3, "most frequent token gets the first regular id");
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(Vocabulary::from_tokens::<&str>(&[], 1).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::from_tokens(&["q", "r", "r", "s", "s", "s"], 2).unwrap();
        let (vp, cp) = (dir.path().join("vocab.txt"), dir.path().join("counts.tsv"));
        v.write(&vp).unwrap();
        v.write_counts(&cp).unwrap();
        assert_eq!(Vocabulary::read(&vp, &cp).unwrap(), v);
    }

    proptest::proptest! {
        #[test]
        fn decode_encode_replaces_oov_with_unk(
            train in proptest::collection::vec("[a-e]", 1..40),
            probe in proptest::collection::vec("[a-h]", 0..20),
        ) {
            let v = Vocabulary::from_tokens(&train, 2).unwrap();
            let ids = v.encode(&probe);
            let back = v.decode(&ids);
            for (orig, dec) in probe.iter().zip(back) {
                if v.get(orig).is_some() {
                    proptest::prop_assert_eq!(dec, orig.as_str());
                } else {
                    proptest::prop_assert_eq!(dec, UNK);
                }
            }
        }
    }
}
