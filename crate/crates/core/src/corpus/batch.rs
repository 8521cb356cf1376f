use std::collections::VecDeque;

use super::document::Document;
use super::vocab::SOS_ID;
use crate::numerics::Rng;

/// How much history the language model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Conditioning {
    Document,
    Sentence,
}

impl Conditioning {
    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Document => "document",
            Conditioning::Sentence => "sentence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "document" | "doc" => Some(Conditioning::Document),
            "sentence" | "sent" => Some(Conditioning::Sentence),
            _ => None,
        }
    }
}

/// One training window: `inputs[i]` predicts `targets[i]` (if any).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub inputs: Vec<u32>,
    pub targets: Vec<Option<u32>>,
    /// Document position of `targets[0]` minus one.
    pub offset: usize,
    pub carryover: bool,
    pub sentence: Option<usize>,
}

impl Window {
    pub fn num_targets(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// Splits a document into consecutive windows of at most `len` inputs.
///
/// Document mode feeds every token (so the final EOS input has no target).
/// Sentence mode restarts at each sentence: sentence 0 starts from the document SOS,
/// later sentences from a fresh SOS input, and no state crosses a boundary.
pub fn document_windows(doc: &Document, len: usize, mode: Conditioning) -> Vec<Window> {
    let ids = &doc.token_ids;
    let mut out = Vec::new();
    match mode {
        Conditioning::Document => {
            let t = ids.len();
            let mut start = 0;
            while start < t {
                let end = (start + len).min(t);
                out.push(Window {
                    inputs: ids[start..end].to_vec(),
                    targets: (start..end).map(|i| ids.get(i + 1).copied()).collect(),
                    offset: start,
                    carryover: start > 0,
                    sentence: None,
                });
                start = end;
            }
        }
        Conditioning::Sentence => {
            for (j, &(a, b)) in doc.sentence_spans.iter().enumerate() {
                let (first_target, inputs) = if j == 0 {
                    (1, ids[..b - 1].to_vec())
                } else {
                    (a, [&[SOS_ID], &ids[a..b - 1]].concat())
                };
                let targets = &ids[first_target..b];
                debug_assert_eq!(inputs.len(), targets.len());
                let mut k = 0;
                while k < targets.len() {
                    let end = (k + len).min(targets.len());
                    out.push(Window {
                        inputs: inputs[k..end].to_vec(),
                        targets: targets[k..end].iter().map(|&x| Some(x)).collect(),
                        offset: first_target + k - 1,
                        carryover: k > 0,
                        sentence: Some(j),
                    });
                    k = end;
                }
            }
        }
    }
    out
}

/// Per-row bookkeeping of a [`SequenceBatch`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowInfo {
    /// Lane (state slot) this row belongs to.
    pub lane: usize,
    /// Index into the document slice the stream was built from.
    pub doc: usize,
    pub doc_id: u32,
    pub offset: usize,
    pub carryover: bool,
    /// Number of real (non-padding) inputs.
    pub len: usize,
    pub sentence: Option<usize>,
}

/// A padded block of windows, row-major `rows × seq_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub seq_len: usize,
    pub rows: Vec<RowInfo>,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_targets(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn input(&self, row: usize, step: usize) -> u32 {
        self.inputs[row * self.seq_len + step]
    }

    /// Target at (row, step) or `None` for padding / the final EOS input.
    pub fn target(&self, row: usize, step: usize) -> Option<u32> {
        let i = row * self.seq_len + step;
        self.mask[i].then(|| self.targets[i])
    }

    /// Inputs of all rows at one time step.
    pub fn column(&self, step: usize) -> Vec<usize> {
        (0..self.rows.len())
            .map(|r| self.input(r, step) as usize)
            .collect()
    }

    pub fn row_targets(&self, row: usize) -> usize {
        let s = row * self.seq_len;
        self.mask[s..s + self.seq_len].iter().filter(|&&m| m).count()
    }
}

/// Streams windows of shuffled documents across `lanes` parallel state slots.
///
/// Each lane works through one document at a time; when it finishes, it takes the next
/// document from the queue. Consecutive windows of a document always stay on one lane,
/// in order, so the lane's final state can be carried into its next row.
pub struct BatchStream<'a> {
    docs: &'a [Document],
    seq_len: usize,
    mode: Conditioning,
    queue: VecDeque<usize>,
    lanes: Vec<Option<(usize, VecDeque<Window>)>>,
}

pub fn batch_sequences<'a>(
    docs: &'a [Document],
    seq_len: usize,
    lanes: usize,
    order_rng: Option<&mut Rng>,
    mode: Conditioning,
) -> BatchStream<'a> {
    assert!(seq_len >= 2 && lanes >= 1, "seq_len >= 2 and lanes >= 1");
    let mut order: Vec<usize> = (0..docs.len()).collect();
    if let Some(rng) = order_rng {
        rng.shuffle(&mut order);
    }
    BatchStream {
        docs,
        seq_len,
        mode,
        queue: order.into(),
        lanes: vec![None; lanes],
    }
}

impl<'a> BatchStream<'a> {
    pub fn num_lanes(&self) -> usize {
        self.lanes.len()
    }

    fn refill(&mut self, lane: usize) {
        while self.lanes[lane].as_ref().is_none_or(|(_, w)| w.is_empty()) {
            let Some(d) = self.queue.pop_front() else {
                self.lanes[lane] = None;
                return;
            };
            let ws = document_windows(&self.docs[d], self.seq_len, self.mode);
            self.lanes[lane] = Some((d, ws.into()));
        }
    }
}

impl Iterator for BatchStream<'_> {
    type Item = SequenceBatch;

    fn next(&mut self) -> Option<SequenceBatch> {
        let mut picked = Vec::new();
        for lane in 0..self.lanes.len() {
            self.refill(lane);
            if let Some((d, windows)) = self.lanes[lane].as_mut() {
                picked.push((lane, *d, windows.pop_front().expect("refilled lane has a window")));
            }
        }
        // Padding only up to the longest row in the batch.
        let l = picked.iter().map(|(_, _, w)| w.inputs.len()).max()?;
        let mut batch = SequenceBatch {
            seq_len: l,
            rows: Vec::with_capacity(picked.len()),
            inputs: Vec::with_capacity(picked.len() * l),
            targets: Vec::with_capacity(picked.len() * l),
            mask: Vec::with_capacity(picked.len() * l),
        };
        for (lane, d, w) in picked {
            let doc = &self.docs[d];
            batch.rows.push(RowInfo {
                lane,
                doc: d,
                doc_id: doc.doc_id,
                offset: w.offset,
                carryover: w.carryover,
                len: w.inputs.len(),
                sentence: w.sentence,
            });
            for i in 0..l {
                batch.inputs.push(w.inputs.get(i).copied().unwrap_or(0));
                let t = w.targets.get(i).copied().flatten();
                batch.targets.push(t.unwrap_or(0));
                batch.mask.push(t.is_some());
            }
        }
        Some(batch)
    }
}
