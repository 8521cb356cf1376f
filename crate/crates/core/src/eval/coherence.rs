use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::corpus::{Document, TopicVocab};
use crate::error::{arg_err, Error, Result};

pub const NPMI_TOP_NS: [usize; 4] = [5, 10, 15, 20];

/// Window-level occurrence counts over the topic vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceStats {
    pub window: usize,
    pub total_windows: u64,
    unigram: Vec<u64>,
    /// Keyed by `(i, j)` with `i < j`.
    pairs: BTreeMap<(u32, u32), u64>,
}

impl CooccurrenceStats {
    pub fn new(window: usize, tv_len: usize) -> Self {
        CooccurrenceStats {
            window,
            total_windows: 0,
            unigram: vec![0; tv_len],
            pairs: BTreeMap::new(),
        }
    }

    pub fn tv_len(&self) -> usize {
        self.unigram.len()
    }

    pub fn count(&self, i: usize) -> u64 {
        self.unigram[i]
    }

    pub fn pair_count(&self, i: usize, j: usize) -> u64 {
        if i == j {
            return self.unigram[i];
        }
        let key = (i.min(j) as u32, i.max(j) as u32);
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    pub fn p(&self, i: usize) -> f64 {
        self.unigram[i] as f64 / self.total_windows as f64
    }

    pub fn p_joint(&self, i: usize, j: usize) -> f64 {
        self.pair_count(i, j) as f64 / self.total_windows as f64
    }

    /// Adds one window given its distinct topic-vocabulary indices.
    pub fn add_window(&mut self, distinct: &[u32]) {
        self.total_windows += 1;
        for (a, &i) in distinct.iter().enumerate() {
            self.unigram[i as usize] += 1;
            for &j in &distinct[a + 1..] {
                *self.pairs.entry((i.min(j), i.max(j))).or_insert(0) += 1;
            }
        }
    }

    /// Adds all windows of one tv-filtered token stream (stride 1; a stream shorter than
    /// the window is a single window; an empty stream adds nothing).
    pub fn add_stream(&mut self, stream: &[u32]) {
        if stream.is_empty() {
            return;
        }
        let w = self.window.min(stream.len());
        let mut seen = HashSet::new();
        for win in stream.windows(w) {
            seen.clear();
            let mut distinct: Vec<u32> = win.iter().copied().filter(|x| seen.insert(*x)).collect();
            distinct.sort_unstable();
            self.add_window(&distinct);
        }
    }

    pub fn merge(&mut self, other: &CooccurrenceStats) -> Result<()> {
        if other.window != self.window || other.tv_len() != self.tv_len() {
            return Err(arg_err!("cannot merge co-occurrence stats of different shape"));
        }
        self.total_windows += other.total_windows;
        for (a, b) in self.unigram.iter_mut().zip(&other.unigram) {
            *a += b;
        }
        for (k, v) in &other.pairs {
            *self.pairs.entry(*k).or_insert(0) += v;
        }
        Ok(())
    }

    /// Header `(window u32, tv u32, total_windows u64)` then records `(i u32, j u32,
    /// count u64)` with `i <= j`; the diagonal holds single-word counts.
    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let mut put = |b: &[u8]| w.write_all(b).map_err(io);
        put(&(self.window as u32).to_le_bytes())?;
        put(&(self.tv_len() as u32).to_le_bytes())?;
        put(&self.total_windows.to_le_bytes())?;
        let diag = self
            .unigram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| ((i as u32, i as u32), c));
        let mut all: Vec<((u32, u32), u64)> = diag.chain(self.pairs.iter().map(|(k, v)| (*k, *v))).collect();
        all.sort_unstable();
        for ((i, j), c) in all {
            put(&i.to_le_bytes())?;
            put(&j.to_le_bytes())?;
            put(&c.to_le_bytes())?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = || Error::Format(format!("{}: malformed co-occurrence cache", path.display()));
        if bytes.len() < 16 || (bytes.len() - 16) % 16 != 0 {
            return Err(bad());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let mut s = CooccurrenceStats::new(u32_at(0) as usize, u32_at(4) as usize);
        s.total_windows = u64_at(8);
        for o in (16..bytes.len()).step_by(16) {
            let (i, j, c) = (u32_at(o), u32_at(o + 4), u64_at(o + 8));
            if i > j || j as usize >= s.tv_len() {
                return Err(bad());
            }
            if i == j {
                s.unigram[i as usize] = c;
            } else {
                s.pairs.insert((i, j), c);
            }
        }
        Ok(s)
    }
}

/// Document-bounded co-occurrence statistics of a reference corpus, counted after
/// dropping tokens outside the topic vocabulary.
pub fn cooccurrence_stats(docs: &[Document], tv: &TopicVocab, window: usize) -> Result<CooccurrenceStats> {
    if docs.is_empty() {
        return Err(arg_err!("co-occurrence statistics need a non-empty corpus"));
    }
    if window == 0 {
        return Err(arg_err!("window must be positive"));
    }
    let mut s = CooccurrenceStats::new(window, tv.len());
    for d in docs {
        let stream: Vec<u32> = d
            .token_ids
            .iter()
            .filter_map(|&t| tv.index_of(t).map(|i| i as u32))
            .collect();
        s.add_stream(&stream);
    }
    Ok(s)
}

/// NPMI of one pair; zero joint count scores -1, and `p(a,b) = 1` scores 1.
pub fn npmi_pair(stats: &CooccurrenceStats, a: usize, b: usize) -> f64 {
    let joint = stats.pair_count(a, b);
    if joint == 0 {
        return -1.0;
    }
    if joint == stats.total_windows {
        return 1.0;
    }
    let lj = stats.p_joint(a, b).ln();
    (lj - stats.p(a).ln() - stats.p(b).ln()) / -lj
}

/// Mean NPMI over all pairs of `words` (topic-vocabulary indices).
pub fn npmi_topic(words: &[usize], stats: &CooccurrenceStats) -> Result<f64> {
    if words.len() < 2 {
        return Err(arg_err!("NPMI needs at least two words, got {}", words.len()));
    }
    if let Some(w) = words.iter().find(|&&w| w >= stats.tv_len()) {
        return Err(arg_err!("word {w} is not in the co-occurrence vocabulary"));
    }
    if stats.total_windows == 0 {
        return Err(arg_err!("co-occurrence statistics are empty"));
    }
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            sum += npmi_pair(stats, words[i], words[j]);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceBreakdown {
    /// `(N, mean over topics of NPMI@N)`.
    pub per_n: Vec<(usize, f64)>,
    /// Mean over topics of the per-topic average over N.
    pub mean: f64,
    pub per_topic: Vec<f64>,
}

/// Coherence of ranked topics: each topic's NPMI averaged over its top 5/10/15/20
/// words, then averaged over topics.
pub fn model_coherence(topics: &[Vec<usize>], stats: &CooccurrenceStats) -> Result<CoherenceBreakdown> {
    if topics.is_empty() {
        return Err(arg_err!("no topics to score"));
    }
    let max_n = NPMI_TOP_NS[NPMI_TOP_NS.len() - 1];
    let mut per_n = vec![0.0; NPMI_TOP_NS.len()];
    let mut per_topic = Vec::with_capacity(topics.len());
    for (k, t) in topics.iter().enumerate() {
        if t.len() < max_n {
            return Err(arg_err!("topic {k} has {} ranked words; {max_n} needed", t.len()));
        }
        let mut acc = 0.0;
        for (slot, &n) in NPMI_TOP_NS.iter().enumerate() {
            let s = npmi_topic(&t[..n], stats)?;
            per_n[slot] += s;
            acc += s;
        }
        per_topic.push(acc / NPMI_TOP_NS.len() as f64);
    }
    let k = topics.len() as f64;
    Ok(CoherenceBreakdown {
        per_n: NPMI_TOP_NS.iter().zip(per_n).map(|(&n, s)| (n, s / k)).collect(),
        mean: per_topic.iter().sum::<f64>() / k,
        per_topic,
    })
}
