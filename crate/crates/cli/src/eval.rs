//! Perplexity, coherence, probing and topic listings over trained checkpoints.

use std::path::Path;

use tglm_core::checkpoint::Checkpoint;
use tglm_core::corpus::{Document, TopicVocab};
use tglm_core::eval::{cooccurrence_stats, model_coherence, perplexity, CoherenceBreakdown, MetricsReport, NPMI_TOP_NS};
use tglm_core::lda::lda_predict_doc;
use tglm_core::probe::{
    check_vocab_hashes, extract_probe_dataset, probe_metrics, train_probe, ProbeMetrics, ProbeSolver,
};
use tglm_core::rnn::LstmLm;
use tglm_core::tglm::TopicGuidedLm;
use tglm_core::{Real, Rng};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::models::{load_model, read_checkpoint, CheckpointInfo, Loaded};
use crate::prep::Prepared;

/// Top words per topic used for coherence (the largest of the 5/10/15/20 cut-offs).
pub const COHERENCE_TOP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(CliError::Usage(format!("unknown split '{s}' (valid or test)"))),
        }
    }

    pub fn docs(self, prep: &Prepared) -> &[Document] {
        match self {
            Split::Valid => &prep.valid,
            Split::Test => &prep.test,
        }
    }
}

/// Causal log-probabilities of every scored token of `doc`. LDA scores only
/// topic-vocabulary tokens, under its topic-vocabulary predictive distribution.
pub fn doc_log_probs<T: Real>(model: &Loaded<T>, doc: &Document, window: Option<usize>, tv: &TopicVocab) -> CliResult<Vec<f64>> {
    Ok(match model {
        Loaded::Lstm(m) => m.predict_doc(doc),
        Loaded::Tglm(m) => m.predict_doc(doc, window.unwrap_or(m.cfg.window))?,
        Loaded::Lda(m) => {
            let dists = lda_predict_doc(m, doc, tv, window.unwrap_or(30), 0)?;
            dists
                .iter()
                .enumerate()
                .filter_map(|(t, p)| tv.index_of(doc.token_ids[t + 1]).map(|i| p[i].ln()))
                .collect()
        }
    })
}

fn ppl_typed<T: Real>(ck: &Checkpoint, docs: &[Document], window: Option<usize>, tv: &TopicVocab) -> CliResult<f64> {
    let model = load_model::<T>(ck)?;
    let (mut sum, mut n) = (0.0, 0);
    for d in docs {
        let lp = doc_log_probs(&model, d, window, tv)?;
        n += lp.len();
        sum += lp.iter().sum::<f64>();
    }
    Ok(perplexity(sum, n)?)
}

/// Document-level causal perplexity of a checkpoint on a split. LDA's value covers
/// topic-vocabulary tokens only and is reported as `tv_ppl`.
pub fn eval_ppl(prep: &Prepared, ckpt: &Path, split: Split, window: Option<usize>) -> CliResult<MetricsReport> {
    let (ck, info) = read_checkpoint(ckpt, prep)?;
    let docs = split.docs(prep);
    let value = match info.precision.as_str() {
        "f32" => ppl_typed::<f32>(&ck, docs, window, &prep.tv)?,
        _ => ppl_typed::<f64>(&ck, docs, window, &prep.tv)?,
    };
    let base = if ck.kind == tglm_core::checkpoint::ModelKind::Lda { "tv_ppl" } else { "ppl" };
    let metric = match split {
        Split::Valid => format!("valid_{base}"),
        Split::Test => base.to_string(),
    };
    Ok(MetricsReport::new(&info.model, info.seed, &info.config_hash, &metric, value)?)
}

/// Ranked top words of every topic, as indices into the model's topic vocabulary.
fn model_topics<T: Real>(model: &Loaded<T>, n: usize) -> CliResult<(Vec<Vec<usize>>, Option<TopicVocab>)> {
    match model {
        Loaded::Lstm(_) => Err(CliError::Usage("an LSTM language model has no topics".into())),
        Loaded::Lda(m) => Ok(((0..m.k()).map(|k| m.top_words(k, n)).collect(), None)),
        Loaded::Tglm(m) => Ok(((0..m.k()).map(|k| m.top_words(k, n)).collect(), Some(m.tv.clone()))),
    }
}

fn checkpoint_topics(prep: &Prepared, ck: &Checkpoint, info: &CheckpointInfo, n: usize) -> CliResult<(Vec<Vec<usize>>, TopicVocab)> {
    let (topics, tv) = match info.precision.as_str() {
        "f32" => model_topics(&load_model::<f32>(ck)?, n)?,
        _ => model_topics(&load_model::<f64>(ck)?, n)?,
    };
    Ok((topics, tv.unwrap_or_else(|| prep.tv.clone())))
}

/// Coherence reports in the 5/10/15/20 protocol: `npmi@N` for each cut-off and their
/// mean as `npmi`.
pub fn coherence_reports(model: &str, seed: u64, hash: &str, c: &CoherenceBreakdown) -> CliResult<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for &(n, v) in &c.per_n {
        out.push(MetricsReport::new(model, seed, hash, &format!("npmi@{n}"), v)?);
    }
    out.push(MetricsReport::new(model, seed, hash, "npmi", c.mean)?);
    Ok(out)
}

/// NPMI coherence of a checkpoint's topics with the whole dataset as reference corpus.
pub fn eval_coherence(prep: &Prepared, cfg: &RunConfig, ckpt: &Path) -> CliResult<Vec<MetricsReport>> {
    let (ck, info) = read_checkpoint(ckpt, prep)?;
    let (topics, tv) = checkpoint_topics(prep, &ck, &info, COHERENCE_TOP)?;
    let stats = cooccurrence_stats(&prep.all_docs(), &tv, cfg.parse("npmi_window")?)?;
    let c = model_coherence(&topics, &stats)?;
    coherence_reports(&info.model, info.seed, &info.config_hash, &c)
}

/// Coherence of `k` topics made of random distinct topic-vocabulary words.
pub fn random_topic_coherence(prep: &Prepared, cfg: &RunConfig, k: usize, seed: u64) -> CliResult<CoherenceBreakdown> {
    let n = COHERENCE_TOP.min(prep.tv.len());
    if n < NPMI_TOP_NS[0] {
        return Err(CliError::Usage("topic vocabulary too small for the coherence protocol".into()));
    }
    let mut rng = Rng::new(seed).substream("coherence.null");
    let topics: Vec<Vec<usize>> = (0..k)
        .map(|_| {
            let mut words: Vec<usize> = (0..prep.tv.len()).collect();
            rng.shuffle(&mut words);
            words.truncate(n);
            words
        })
        .collect();
    let stats = cooccurrence_stats(&prep.all_docs(), &prep.tv, cfg.parse("npmi_window")?)?;
    Ok(model_coherence(&topics, &stats)?)
}

/// `topic k: w1 w2 ...` for every topic of a checkpoint.
pub fn show_topics(prep: &Prepared, ckpt: &Path, n: usize) -> CliResult<String> {
    let (ck, info) = read_checkpoint(ckpt, prep)?;
    let (topics, tv) = checkpoint_topics(prep, &ck, &info, n)?;
    let mut out = String::new();
    for (k, words) in topics.iter().enumerate() {
        let ws: Vec<&str> = words.iter().map(|&i| prep.vocab.token(tv.ids()[i])).collect();
        out.push_str(&format!("topic {k}: {}\n", ws.join(" ")));
    }
    Ok(out)
}

/// Probe results for a trained language model and its random-initialisation twin.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub trained: ProbeMetrics,
    pub init: ProbeMetrics,
    pub reports: Vec<MetricsReport>,
}

fn probe_solver(cfg: &RunConfig) -> CliResult<ProbeSolver> {
    match cfg.get("probe.solver") {
        "ridge" => Ok(ProbeSolver::Ridge),
        "cg" => Ok(ProbeSolver::Iterative {
            tol: 1e-6,
            max_iter: 10_000,
        }),
        s => Err(CliError::Usage(format!("unknown probe solver '{s}' (ridge or cg)"))),
    }
}

fn fit_and_score<T: Real>(lm: &LstmLm<T>, tglm: &TopicGuidedLm<T>, prep: &Prepared, cfg: &RunConfig) -> CliResult<ProbeMetrics> {
    let chunk = cfg.parse("probe.chunk")?;
    let fit = extract_probe_dataset(lm, tglm, &prep.train, chunk)?;
    let held = extract_probe_dataset(lm, tglm, &prep.test, chunk)?;
    let probe = train_probe(&fit, cfg.parse("probe.ridge")?, probe_solver(cfg)?)?;
    Ok(probe_metrics(&probe, &held)?)
}

fn probe_typed<T: Real>(prep: &Prepared, cfg: &RunConfig, lm_ck: &Checkpoint, tglm_ck: &Checkpoint, seed: u64) -> CliResult<(ProbeMetrics, ProbeMetrics)> {
    let lm = LstmLm::<T>::from_checkpoint(lm_ck)?;
    let tglm = TopicGuidedLm::<T>::from_checkpoint(tglm_ck)?;
    let init = LstmLm::<T>::new(lm.config(), &Rng::new(seed).substream("probe.init"))?;
    Ok((fit_and_score(&lm, &tglm, prep, cfg)?, fit_and_score(&init, &tglm, prep, cfg)?))
}

/// Fits linear probes from LM hidden states to the topic model's prefix estimates on
/// training documents and scores them on test documents, for the trained LM and for a
/// randomly initialised LM of the same shape.
pub fn eval_probe(prep: &Prepared, cfg: &RunConfig, lm_path: &Path, tglm_path: &Path) -> CliResult<ProbeOutcome> {
    let (lm_ck, lm_info) = read_checkpoint(lm_path, prep)?;
    let (tglm_ck, tglm_info) = read_checkpoint(tglm_path, prep)?;
    check_vocab_hashes(&lm_ck, &tglm_ck)?;
    if lm_ck.kind != tglm_core::checkpoint::ModelKind::LstmLm {
        return Err(CliError::Usage(format!("{} is not an LSTM language model", lm_path.display())));
    }
    let (trained, init) = match lm_info.precision.as_str() {
        "f32" if tglm_info.precision == "f32" => probe_typed::<f32>(prep, cfg, &lm_ck, &tglm_ck, lm_info.seed)?,
        _ => probe_typed::<f64>(prep, cfg, &lm_ck, &tglm_ck, lm_info.seed)?,
    };
    let hash = cfg.hash(&format!("probe:{}:{}", lm_info.config_hash, tglm_info.config_hash));
    let mut reports = Vec::new();
    for (suffix, m) in [("", &trained), ("-init", &init)] {
        let model = format!("{}{suffix}>{}", lm_info.model, tglm_info.model);
        for (metric, v) in [("acc1", m.acc1), ("acc5", m.acc5), ("r2", m.r2)] {
            reports.push(MetricsReport::new(&model, lm_info.seed, &hash, metric, v)?);
        }
    }
    Ok(ProbeOutcome { trained, init, reports })
}
