//! Multi-model, multi-seed experiment drivers shared by the command line and the
//! acceptance suite.

use std::path::{Path, PathBuf};

use tglm_core::corpus::{generate_synthetic_corpus, SynthConfig};
use tglm_core::eval::MetricsReport;
use tglm_core::checkpoint::Checkpoint;
use tglm_core::{Error, Rng};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::eval::{coherence_reports, eval_coherence, eval_ppl, eval_probe, random_topic_coherence, ProbeOutcome, Split};
use crate::models::{run_dir, train_run, ModelSpec, MODEL_FILE};
use crate::prep::{run_preprocess, Prepared};

/// Model row name used for the random-word-set coherence baseline.
pub const NULL_MODEL: &str = "random-topics";

/// Writes a synthetic corpus under `root/corpus` and preprocesses it into `root/prep`.
pub fn synth_and_preprocess(root: &Path, synth: &SynthConfig, seed: u64, cfg: &RunConfig) -> CliResult<Prepared> {
    let corpus_dir = root.join("corpus");
    generate_synthetic_corpus(synth, &Rng::new(seed))?.write(&corpus_dir)?;
    let mut cfg = cfg.clone();
    cfg.set("stop_list", &corpus_dir.join("stopwords.txt").display().to_string())?;
    run_preprocess(&cfg, Some(&corpus_dir), &root.join("prep"))
}

/// Checkpoint of `spec` for `seed`, training (or resuming) it if it is not there yet.
pub fn ensure_trained(root: &Path, prep: &Prepared, cfg: &RunConfig, spec: ModelSpec, seed: u64) -> CliResult<PathBuf> {
    let dir = run_dir(root, spec, seed);
    let path = dir.join(MODEL_FILE);
    let hash = cfg.hash(spec.label());
    if path.exists() {
        let ck = Checkpoint::read(&path)?;
        if ck.config_value("config_hash") != Some(hash.as_str()) {
            return Err(Error::Contract(format!(
                "{} was trained under a different configuration than {hash}",
                path.display()
            ))
            .into());
        }
    } else {
        log::info!("training {} seed {seed}", spec.label());
        train_run(prep, cfg, spec, seed, &dir, true, None)?;
    }
    Ok(path)
}

/// Test perplexity of every model and seed.
pub fn perplexity_table(root: &Path, prep: &Prepared, cfg: &RunConfig, specs: &[ModelSpec], seeds: &[u64]) -> CliResult<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for &spec in specs {
        for &seed in seeds {
            let ck = ensure_trained(root, prep, cfg, spec, seed)?;
            out.push(eval_ppl(prep, &ck, Split::Test, None)?);
        }
    }
    Ok(out)
}

/// Coherence of every topic model and seed, followed by the random-word-set baseline
/// with the configured number of topics under the same seeds.
pub fn coherence_table(root: &Path, prep: &Prepared, cfg: &RunConfig, specs: &[ModelSpec], seeds: &[u64]) -> CliResult<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for &spec in specs {
        for &seed in seeds {
            let ck = ensure_trained(root, prep, cfg, spec, seed)?;
            out.extend(eval_coherence(prep, cfg, &ck)?);
        }
    }
    let k = cfg.parse("k")?;
    let hash = cfg.hash(NULL_MODEL);
    for &seed in seeds {
        let c = random_topic_coherence(prep, cfg, k, seed)?;
        out.extend(coherence_reports(NULL_MODEL, seed, &hash, &c)?);
    }
    Ok(out)
}

/// Probe results of `lm` against each topic-guided model, per seed.
pub fn probe_table(root: &Path, prep: &Prepared, cfg: &RunConfig, lm: ModelSpec, tglms: &[ModelSpec], seeds: &[u64]) -> CliResult<Vec<ProbeOutcome>> {
    let mut out = Vec::new();
    for &t in tglms {
        for &seed in seeds {
            let lm_ck = ensure_trained(root, prep, cfg, lm, seed)?;
            let t_ck = ensure_trained(root, prep, cfg, t, seed)?;
            out.push(eval_probe(prep, cfg, &lm_ck, &t_ck)?);
        }
    }
    Ok(out)
}
