//! Model kinds the command line can train, and their checkpoints on disk.

use std::path::{Path, PathBuf};

use tglm_core::checkpoint::{Checkpoint, ModelKind};
use tglm_core::corpus::{Conditioning, CountVector, TopicVocab};
use tglm_core::lda::{gibbs_train, AlphaMode, LdaConfig, LdaModel};
use tglm_core::rnn::{
    save_checkpoint, train_model, EpochLog, LmConfig, LstmLm, OptimizerConfig, TrainConfig, TrainOutcome,
};
use tglm_core::tglm::{TglmConfig, TglmKind, TopicGuidedLm};
use tglm_core::{Error, Real, Rng};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::prep::Prepared;

pub const MODEL_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    Lstm(Conditioning),
    LstmGru,
    Tglm(TglmKind),
    Lda,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 7] = [
        ModelSpec::Lstm(Conditioning::Document),
        ModelSpec::Lstm(Conditioning::Sentence),
        ModelSpec::LstmGru,
        ModelSpec::Tglm(TglmKind::TopicRnn),
        ModelSpec::Tglm(TglmKind::Vrtm),
        ModelSpec::Tglm(TglmKind::Tdlm),
        ModelSpec::Lda,
    ];

    /// Parses a model name; plain `lstm` takes its conditioning from the configuration.
    pub fn parse(name: &str, cfg: &RunConfig) -> CliResult<Self> {
        let spec = match name {
            "lstm" => {
                let c = cfg.get("conditioning");
                ModelSpec::Lstm(
                    Conditioning::parse(c).ok_or_else(|| CliError::Usage(format!("unknown conditioning '{c}'")))?,
                )
            }
            "lstm-doc" => ModelSpec::Lstm(Conditioning::Document),
            "lstm-sentence" => ModelSpec::Lstm(Conditioning::Sentence),
            "lstm-gru" => ModelSpec::LstmGru,
            "topicrnn" => ModelSpec::Tglm(TglmKind::TopicRnn),
            "vrtm" => ModelSpec::Tglm(TglmKind::Vrtm),
            "tdlm" => ModelSpec::Tglm(TglmKind::Tdlm),
            "lda" => ModelSpec::Lda,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown model '{other}' (expected lstm, lstm-sentence, lstm-gru, topicrnn, vrtm, tdlm or lda)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelSpec::Lstm(Conditioning::Document) => "lstm",
            ModelSpec::Lstm(Conditioning::Sentence) => "lstm-sentence",
            ModelSpec::LstmGru => "lstm-gru",
            ModelSpec::Tglm(k) => k.name(),
            ModelSpec::Lda => "lda",
        }
    }

    /// The LSTM-LM of matching size each topic-guided model is compared against.
    pub fn baseline(self) -> Option<ModelSpec> {
        match self {
            ModelSpec::Tglm(TglmKind::Tdlm) => Some(ModelSpec::LstmGru),
            ModelSpec::Tglm(_) => Some(ModelSpec::Lstm(Conditioning::Document)),
            _ => None,
        }
    }
}

pub fn run_dir(root: &Path, spec: ModelSpec, seed: u64) -> PathBuf {
    root.join("runs").join(spec.label()).join(format!("seed{seed}"))
}

pub fn lm_config(cfg: &RunConfig, vocab_size: usize, conditioning: Conditioning, gru: bool) -> CliResult<LmConfig> {
    let hidden = cfg.parse("hidden")?;
    let lm = LmConfig {
        vocab_size,
        layers: cfg.parse("layers")?,
        hidden,
        embed: cfg.parse("embed")?,
        dropout: cfg.parse("dropout")?,
        with_gru_head: gru,
        gru_input: hidden,
        conditioning,
    };
    lm.validate()?;
    Ok(lm)
}

pub fn tglm_config(cfg: &RunConfig, kind: TglmKind, vocab_size: usize) -> CliResult<TglmConfig> {
    let top_m: usize = cfg.parse("top_m")?;
    let c = TglmConfig {
        kind,
        lm: lm_config(cfg, vocab_size, Conditioning::Document, kind == TglmKind::Tdlm)?,
        k: cfg.parse("k")?,
        enc_hidden: cfg.parse("enc_hidden")?,
        stop_hidden: cfg.parse("stop_hidden")?,
        window: cfg.parse("window")?,
        top_m: (top_m > 0).then_some(top_m),
    };
    c.validate()?;
    Ok(c)
}

pub fn lda_config(cfg: &RunConfig) -> CliResult<LdaConfig> {
    let c = LdaConfig {
        alpha: cfg.parse("lda.alpha")?,
        alpha_mode: AlphaMode::Total,
        beta_hyper: cfg.parse("lda.beta")?,
        iterations: cfg.parse("lda.iterations")?,
        predict_burnin: cfg.parse("lda.predict_burnin")?,
        predict_samples: cfg.parse("lda.predict_samples")?,
        predict_spacing: cfg.parse("lda.predict_spacing")?,
        ..LdaConfig::mallet(cfg.parse("k")?)
    };
    c.validate()?;
    Ok(c)
}

pub fn train_config(cfg: &RunConfig, state_dir: PathBuf, resume: bool, stop_after: Option<usize>) -> CliResult<TrainConfig> {
    let lr: f64 = cfg.parse("lr")?;
    let optimizer = match cfg.get("optimizer") {
        "adam" => OptimizerConfig::adam(lr),
        "sgd" => OptimizerConfig::sgd_decay(lr, cfg.parse("lr_divisor")?),
        o => return Err(CliError::Usage(format!("unknown optimizer '{o}'"))),
    };
    Ok(TrainConfig {
        seq_len: cfg.parse("seq_len")?,
        batch_size: cfg.parse("batch_size")?,
        max_epochs: cfg.parse("max_epochs")?,
        patience: cfg.parse("patience")?,
        optimizer,
        clip_norm: cfg.parse("clip_norm")?,
        out_dir: Some(state_dir),
        resume,
        stop_after,
    })
}

/// What a finished (or interrupted) training run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub history: Vec<EpochLog>,
    pub best_valid_ppl: Option<f64>,
    pub finished: bool,
    pub checkpoint: PathBuf,
}

/// Provenance lines appended to every checkpoint the command line writes.
fn provenance(spec: ModelSpec, seed: u64, hash: &str, prep: &Prepared, precision: &str) -> String {
    format!(
        "model={}\nseed={seed}\nconfig_hash={hash}\nprep_hash={}\nvocab_hash={}\nprecision={precision}\n",
        spec.label(),
        prep.prep_hash(),
        prep.vocab_hash()
    )
}

fn write_log(dir: &Path, history: &[EpochLog]) -> CliResult<()> {
    let mut s = String::from("epoch\ttrain_loss\tvalid_ppl\tlr\n");
    for h in history {
        s.push_str(&format!("{}\t{:.6}\t{:.6}\t{}\n", h.epoch, h.train_loss, h.valid_ppl, h.lr));
    }
    let p = dir.join(LOG_FILE);
    std::fs::write(&p, s).map_err(|e| CliError::io(&p, e))
}

/// Topic vocabulary a model kind is built over.
pub fn topic_vocab_for(prep: &Prepared, spec: ModelSpec) -> &TopicVocab {
    match spec {
        ModelSpec::Tglm(TglmKind::TopicRnn | TglmKind::Vrtm) => &prep.tv_df,
        _ => &prep.tv,
    }
}

fn train_typed<T: Real>(
    prep: &Prepared,
    cfg: &RunConfig,
    spec: ModelSpec,
    seed: u64,
    tc: &TrainConfig,
    extra: &str,
) -> CliResult<(TrainOutcome, Checkpoint)> {
    let v = prep.vocab.len();
    let rng = Rng::new(seed);
    Ok(match spec {
        ModelSpec::Lstm(_) | ModelSpec::LstmGru => {
            let (cond, gru) = match spec {
                ModelSpec::Lstm(c) => (c, false),
                _ => (Conditioning::Document, true),
            };
            let mut m = LstmLm::<T>::new(&lm_config(cfg, v, cond, gru)?, &rng)?;
            let out = train_model(&mut m, &prep.train, &prep.valid, tc, &rng)?;
            (out, m.to_checkpoint(extra))
        }
        ModelSpec::Tglm(kind) => {
            let tc_cfg = tglm_config(cfg, kind, v)?;
            let mut m = TopicGuidedLm::<T>::new(&tc_cfg, topic_vocab_for(prep, spec), &prep.stop_ids, &rng)?;
            let out = train_model(&mut m, &prep.train, &prep.valid, tc, &rng)?;
            (out, m.to_checkpoint(extra))
        }
        ModelSpec::Lda => unreachable!("LDA is not trained by gradient descent"),
    })
}

/// Trains one model for one seed into `run_dir`, writing `model.ckpt` and the epoch log.
pub fn train_run(
    prep: &Prepared,
    cfg: &RunConfig,
    spec: ModelSpec,
    seed: u64,
    dir: &Path,
    resume: bool,
    stop_after: Option<usize>,
) -> CliResult<RunSummary> {
    let hash = cfg.hash(spec.label());
    let precision = cfg.get("precision").to_string();
    let extra = provenance(spec, seed, &hash, prep, &precision);
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let ckpt_path = dir.join(MODEL_FILE);
    let context = format!("training {} seed {seed}", spec.label());
    let result = (|| -> CliResult<RunSummary> {
        if spec == ModelSpec::Lda {
            let tv = topic_vocab_for(prep, spec);
            let bags: Vec<CountVector> = prep
                .train
                .iter()
                .map(|d| tglm_core::corpus::bag_of_words(d, tv, None))
                .collect::<Result<_, _>>()?;
            let model = gibbs_train(&bags, &lda_config(cfg)?, &Rng::new(seed))?;
            let ck = model.to_checkpoint(&format!("{extra}topic_vocab_hash={}\n", tv.hash()));
            save_checkpoint(&ck, &ckpt_path)?;
            return Ok(RunSummary {
                model: spec.label().into(),
                seed,
                config_hash: hash.clone(),
                history: Vec::new(),
                best_valid_ppl: None,
                finished: true,
                checkpoint: ckpt_path.clone(),
            });
        }
        let tc = train_config(cfg, dir.join("state"), resume, stop_after)?;
        let (out, ck) = match precision.as_str() {
            "f32" => train_typed::<f32>(prep, cfg, spec, seed, &tc, &extra)?,
            "f64" => train_typed::<f64>(prep, cfg, spec, seed, &tc, &extra)?,
            p => return Err(CliError::Usage(format!("precision must be f32 or f64, got '{p}'"))),
        };
        write_log(dir, &out.history)?;
        if out.finished {
            save_checkpoint(&ck, &ckpt_path)?;
        }
        Ok(RunSummary {
            model: spec.label().into(),
            seed,
            config_hash: hash.clone(),
            history: out.history,
            best_valid_ppl: Some(out.best_valid_ppl),
            finished: out.finished,
            checkpoint: ckpt_path.clone(),
        })
    })();
    result.map_err(|e| e.in_run(context, &hash))
}

/// A checkpoint written by [`train_run`], loaded at its recorded precision.
pub enum Loaded<T> {
    Lstm(LstmLm<T>),
    Tglm(TopicGuidedLm<T>),
    Lda(LdaModel),
}

/// Provenance of a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointInfo {
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
    pub precision: String,
}

pub fn read_checkpoint(path: &Path, prep: &Prepared) -> CliResult<(Checkpoint, CheckpointInfo)> {
    let ck = Checkpoint::read(path)?;
    let field = |k: &str| {
        ck.config_value(k)
            .map(str::to_string)
            .ok_or_else(|| CliError::Core(Error::Format(format!("{}: checkpoint lacks {k}", path.display()))))
    };
    let recorded = field("prep_hash")?;
    if recorded != prep.prep_hash() || field("vocab_hash")? != prep.vocab_hash() {
        return Err(Error::Contract(format!(
            "{} was trained on different preprocessed data (prep hash {recorded}, current {})",
            path.display(),
            prep.prep_hash()
        ))
        .into());
    }
    if ck.kind == ModelKind::Lda && ck.config_value("topic_vocab_hash") != Some(prep.tv.hash().as_str()) {
        return Err(Error::Contract(format!("{}: topic vocabulary hash mismatch", path.display())).into());
    }
    let info = CheckpointInfo {
        model: field("model")?,
        seed: field("seed")?
            .parse()
            .map_err(|_| CliError::Core(Error::Format("bad seed".into())))?,
        config_hash: field("config_hash")?,
        precision: field("precision")?,
    };
    Ok((ck, info))
}

pub fn load_model<T: Real>(ck: &Checkpoint) -> CliResult<Loaded<T>> {
    Ok(match ck.kind {
        ModelKind::LstmLm => Loaded::Lstm(LstmLm::from_checkpoint(ck)?),
        ModelKind::Lda => Loaded::Lda(LdaModel::from_checkpoint(ck)?),
        _ => Loaded::Tglm(TopicGuidedLm::from_checkpoint(ck)?),
    })
}
