use std::path::Path;

use super::vocab::{Vocabulary, EOS_ID, SOS_ID};
use crate::error::{Error, Result};

pub const DEFAULT_SENTENCE_SEPARATOR: &str = "</s>";

/// A pre-tokenised document split into sentences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawDoc {
    pub sentences: Vec<Vec<String>>,
}

impl RawDoc {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Parses one corpus line; empty sentences (repeated separators) are dropped.
    pub fn parse_line(line: &str, separator: &str) -> Self {
        let mut sentences = vec![Vec::new()];
        for tok in line.split_whitespace() {
            if tok == separator {
                sentences.push(Vec::new());
            } else {
                sentences.last_mut().unwrap().push(tok.to_string());
            }
        }
        sentences.retain(|s| !s.is_empty());
        RawDoc { sentences }
    }

    pub fn to_line(&self, separator: &str) -> String {
        self.sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(&format!(" {separator} "))
    }
}

/// Reads a corpus file: UTF-8, one document per line, blank lines skipped.
pub fn read_corpus(path: &Path, separator: &str) -> Result<Vec<RawDoc>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| RawDoc::parse_line(l, separator))
        .collect())
}

pub fn write_corpus(path: &Path, docs: &[RawDoc], separator: &str) -> Result<()> {
    let mut s = String::new();
    for d in docs {
        s.push_str(&d.to_line(separator));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// An encoded document: `<sos> tokens... <eos>` with sentence spans that partition
/// `[0, len)`. The first span includes SOS and the last includes EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: u32,
    pub token_ids: Vec<u32>,
    pub sentence_spans: Vec<(usize, usize)>,
}

impl Document {
    pub fn encode(raw: &RawDoc, vocab: &Vocabulary, doc_id: u32) -> Self {
        let mut token_ids = vec![SOS_ID];
        let mut spans = Vec::with_capacity(raw.sentences.len().max(1));
        let mut start = 0;
        for s in &raw.sentences {
            token_ids.extend(s.iter().map(|t| vocab.id(t)));
            spans.push((start, token_ids.len()));
            start = token_ids.len();
        }
        token_ids.push(EOS_ID);
        match spans.last_mut() {
            Some(last) => last.1 = token_ids.len(),
            None => spans.push((0, token_ids.len())),
        }
        Document {
            doc_id,
            token_ids,
            sentence_spans: spans,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_spans.len()
    }

    /// Index of the sentence containing token position `pos`.
    pub fn sentence_of(&self, pos: usize) -> usize {
        self.sentence_spans
            .partition_point(|&(_, end)| end <= pos)
            .min(self.sentence_spans.len() - 1)
    }

    /// Number of next-token predictions the document contributes (every token after SOS).
    pub fn num_predictions(&self) -> usize {
        self.token_ids.len().saturating_sub(1)
    }
}

pub fn encode_corpus(raw: &[RawDoc], vocab: &Vocabulary, first_id: u32) -> Vec<Document> {
    raw.iter()
        .enumerate()
        .map(|(i, d)| Document::encode(d, vocab, first_id + i as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(line: &str) -> RawDoc {
        RawDoc::parse_line(line, DEFAULT_SENTENCE_SEPARATOR)
    }

    #[test]
    fn parse_drops_empty_sentences() {
        let d = doc("a b </s> </s> c </s>");
        assert_eq!(d.sentences, vec![vec!["a", "b"], vec!["c"]]);
        assert_eq!(d.to_line("</s>"), "a b </s> c");
    }

    #[test]
    fn spans_partition_with_sos_and_eos() {
        let raw = doc("a b </s> c d e </s> f");
        let v = Vocabulary::build(std::slice::from_ref(&raw), 1).unwrap();
        let d = Document::encode(&raw, &v, 7);
        assert_eq!(d.token_ids.first(), Some(&SOS_ID));
        assert_eq!(d.token_ids.last(), Some(&EOS_ID));
        assert_eq!(d.sentence_spans, vec![(0, 3), (3, 6), (6, 8)]);
        assert_eq!(d.sentence_of(0), 0);
        assert_eq!(d.sentence_of(3), 1);
        assert_eq!(d.sentence_of(7), 2);
        assert_eq!(d.num_predictions(), 7);
    }

    #[test]
    fn empty_document_still_has_one_span() {
        let v = Vocabulary::from_tokens(&["a"], 1).unwrap();
        let d = Document::encode(&RawDoc::default(), &v, 0);
        assert_eq!(d.token_ids, vec![SOS_ID, EOS_ID]);
        assert_eq!(d.sentence_spans, vec![(0, 2)]);
    }
}
