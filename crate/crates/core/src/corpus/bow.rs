use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::document::Document;
use super::topic_vocab::TopicVocab;
use crate::error::{arg_err, Error, Result};
use crate::numerics::Real;

/// Dense counts over the topic vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountVector {
    pub doc_id: u32,
    pub excluded_sentence: Option<usize>,
    pub counts: Vec<u32>,
}

impl CountVector {
    pub fn zeros(doc_id: u32, len: usize) -> Self {
        CountVector {
            doc_id,
            excluded_sentence: None,
            counts: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
    }

    /// L1-normalised counts; an empty bag stays all-zero.
    pub fn normalized<T: Real>(&self) -> Vec<T> {
        let total = self.total();
        if total == 0 {
            return vec![T::zero(); self.counts.len()];
        }
        let inv = 1.0 / total as f64;
        self.counts.iter().map(|&c| T::c(c as f64 * inv)).collect()
    }

    fn add_tokens(&mut self, ids: &[u32], tv: &TopicVocab) {
        for &id in ids {
            if let Some(i) = tv.index_of(id) {
                self.counts[i] += 1;
            }
        }
    }
}

/// Counts topic-vocabulary tokens of `doc`, optionally skipping one sentence.
pub fn bag_of_words(
    doc: &Document,
    tv: &TopicVocab,
    exclude_sentence: Option<usize>,
) -> Result<CountVector> {
    let mut bag = CountVector::zeros(doc.doc_id, tv.len());
    match exclude_sentence {
        None => bag.add_tokens(&doc.token_ids, tv),
        Some(j) => {
            let &(a, b) = doc.sentence_spans.get(j).ok_or_else(|| {
                arg_err!(
                    "sentence {j} out of range for document {} with {} sentences",
                    doc.doc_id,
                    doc.num_sentences()
                )
            })?;
            bag.add_tokens(&doc.token_ids[..a], tv);
            bag.add_tokens(&doc.token_ids[b..], tv);
            bag.excluded_sentence = Some(j);
        }
    }
    Ok(bag)
}

/// Counts over positions `< end` only.
pub fn prefix_bag(doc: &Document, tv: &TopicVocab, end: usize) -> CountVector {
    let mut bag = CountVector::zeros(doc.doc_id, tv.len());
    bag.add_tokens(&doc.token_ids[..end.min(doc.len())], tv);
    bag
}

pub fn write_bow_cache(path: &Path, bags: &[CountVector]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for bag in bags {
        let nz: Vec<(usize, u32)> = bag.nonzeros().collect();
        w.write_all(&bag.doc_id.to_le_bytes()).map_err(io)?;
        w.write_all(&(nz.len() as u32).to_le_bytes()).map_err(io)?;
        for (i, c) in nz {
            w.write_all(&(i as u32).to_le_bytes()).map_err(io)?;
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_bow_cache(path: &Path, tv_len: usize) -> Result<Vec<CountVector>> {
    let mut bytes = Vec::new();
    BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    let mut words = bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()));
    if bytes.len() % 4 != 0 {
        return Err(bad("length not a multiple of 4"));
    }
    let mut out = Vec::new();
    while let Some(doc_id) = words.next() {
        let nnz = words.next().ok_or_else(|| bad("truncated record"))?;
        let mut bag = CountVector::zeros(doc_id, tv_len);
        for _ in 0..nnz {
            let (i, c) = words
                .next()
                .zip(words.next())
                .ok_or_else(|| bad("truncated record"))?;
            *bag
                .counts
                .get_mut(i as usize)
                .ok_or_else(|| bad("topic id out of range"))? = c;
        }
        out.push(bag);
    }
    Ok(out)
}
