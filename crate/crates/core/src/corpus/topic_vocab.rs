use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::vocab::{hex16, Vocabulary, NUM_SPECIALS};
use crate::error::{arg_err, Error, Result};

/// Why a vocabulary entry was left out of the topic vocabulary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Exclusion {
    pub special: bool,
    pub stop_word: bool,
    pub too_frequent: bool,
    pub too_few_docs: bool,
}

impl Exclusion {
    pub fn any(&self) -> bool {
        self.special || self.stop_word || self.too_frequent || self.too_few_docs
    }
}

/// Subset of vocabulary ids admitted to topic-model components, densely re-indexed.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicVocab {
    ids: Vec<u32>,
    position: Vec<Option<u32>>,
    flags: Vec<Exclusion>,
}

pub fn read_stop_list(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

impl TopicVocab {
    /// Drops specials, stop words, the `top_frac` most frequent types (rounded up),
    /// and, when `min_doc_freq > 0`, types found in fewer training documents.
    pub fn build(
        vocab: &Vocabulary,
        stop_list: &HashSet<String>,
        top_frac: f64,
        min_doc_freq: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&top_frac) {
            return Err(arg_err!("top_frac must lie in [0, 1), got {top_frac}"));
        }
        let v = vocab.len();
        let regular = v - NUM_SPECIALS;
        let n_top = (top_frac * regular as f64).ceil() as usize;
        // regular ids are already sorted by descending frequency
        let mut flags = vec![Exclusion::default(); v];
        for (id, f) in flags.iter_mut().enumerate() {
            let id32 = id as u32;
            f.special = id < NUM_SPECIALS;
            f.stop_word = stop_list.contains(vocab.token(id32));
            f.too_frequent = id >= NUM_SPECIALS && id < NUM_SPECIALS + n_top;
            f.too_few_docs = min_doc_freq > 0 && vocab.doc_freq(id32) < min_doc_freq;
        }
        Ok(Self::from_flags(flags))
    }

    fn from_flags(flags: Vec<Exclusion>) -> Self {
        let mut ids = Vec::new();
        let mut position = vec![None; flags.len()];
        for (id, f) in flags.iter().enumerate() {
            if !f.any() {
                position[id] = Some(ids.len() as u32);
                ids.push(id as u32);
            }
        }
        TopicVocab {
            ids,
            position,
            flags,
        }
    }

    /// Rebuilds from the admitted vocabulary ids (e.g. loaded from a file); provenance
    /// flags for excluded entries are not recoverable and are left unset.
    pub fn from_ids(vocab_len: usize, ids: &[u32]) -> Result<Self> {
        let mut flags = vec![
            Exclusion {
                special: true,
                ..Default::default()
            };
            vocab_len
        ];
        for &id in ids {
            let f = flags
                .get_mut(id as usize)
                .ok_or_else(|| arg_err!("topic id {id} outside vocabulary of {vocab_len}"))?;
            *f = Exclusion::default();
        }
        Ok(Self::from_flags(flags))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Vocabulary ids in topic-index order.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn vocab_len(&self) -> usize {
        self.position.len()
    }

    pub fn index_of(&self, vocab_id: u32) -> Option<usize> {
        self.position
            .get(vocab_id as usize)
            .copied()
            .flatten()
            .map(|p| p as usize)
    }

    pub fn contains(&self, vocab_id: u32) -> bool {
        self.index_of(vocab_id).is_some()
    }

    pub fn exclusion(&self, vocab_id: u32) -> Exclusion {
        self.flags[vocab_id as usize]
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.ids {
            h.update(id.to_le_bytes());
        }
        hex16(&h.finalize())
    }

    /// One admitted token per line, in topic-index order.
    pub fn write(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let s: String = self
            .ids
            .iter()
            .map(|&i| format!("{}\n", vocab.token(i)))
            .collect();
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ids = text
            .lines()
            .map(|t| {
                vocab
                    .get(t)
                    .ok_or_else(|| Error::Format(format!("{}: unknown token {t}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(vocab.len(), &ids)
    }
}
