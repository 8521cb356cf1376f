use std::path::{Path, PathBuf};

use super::cell::RnnState;
use super::lm::{BatchLoss, LaneStates, LmConfig, LstmLm};
use super::optim::{clip_global_norm, Optimizer, OptimizerConfig};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{batch_sequences, Document, SequenceBatch};
use crate::error::{arg_err, Error, Result};
use crate::eval::perplexity;
use crate::numerics::{NumArray, ParamSet, Real, Rng};

/// Random streams handed to a model for one batch.
pub struct StepRngs<'a> {
    pub dropout: &'a mut Rng,
    pub noise: &'a mut Rng,
}

/// A recurrent model trainable with truncated BPTT.
pub trait Trainable<T: Real> {
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn lm_config(&self) -> &LmConfig;
    /// Loss on one batch starting from detached states `init`. `docs` is the slice the
    /// batch stream was built from.
    fn batch_loss(
        &self,
        batch: &SequenceBatch,
        docs: &[Document],
        init: &RnnState<T>,
        rngs: StepRngs<'_>,
    ) -> Result<BatchLoss<T>>;
    /// Causal log-probabilities of every predicted token of `doc`.
    fn doc_log_probs(&self, doc: &Document) -> Result<Vec<f64>>;
    fn to_checkpoint(&self) -> Checkpoint;
}

impl<T: Real> Trainable<T> for LstmLm<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::LstmLm
    }

    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn lm_config(&self) -> &LmConfig {
        &self.core.cfg
    }

    fn batch_loss(&self, batch: &SequenceBatch, _: &[Document], init: &RnnState<T>, rngs: StepRngs<'_>) -> Result<BatchLoss<T>> {
        Ok(LstmLm::batch_loss(self, batch, init, Some(rngs.dropout)))
    }

    fn doc_log_probs(&self, doc: &Document) -> Result<Vec<f64>> {
        Ok(self.predict_doc(doc))
    }

    fn to_checkpoint(&self) -> Checkpoint {
        LstmLm::to_checkpoint(self, "")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seq_len: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best validation perplexity.
    pub patience: usize,
    pub optimizer: OptimizerConfig,
    pub clip_norm: f64,
    /// Where `best.ckpt` and `last.ckpt` are written (nothing is written when `None`).
    pub out_dir: Option<PathBuf>,
    /// Continue from `out_dir/last.ckpt` when it exists.
    pub resume: bool,
    /// Stop after this many epochs in this invocation (simulates an interruption).
    pub stop_after: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seq_len: 30,
            batch_size: 64,
            max_epochs: 40,
            patience: 5,
            optimizer: OptimizerConfig::default(),
            clip_norm: 5.0,
            out_dir: None,
            resume: false,
            stop_after: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Token-weighted mean training objective.
    pub train_loss: f64,
    pub valid_ppl: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_ppl: f64,
    /// False when training stopped because of `stop_after`.
    pub finished: bool,
}

/// Perplexity of `model` over `docs` with exact token accounting.
pub fn corpus_perplexity<T: Real, M: Trainable<T> + ?Sized>(model: &M, docs: &[Document]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for d in docs {
        let lp = model.doc_log_probs(d)?;
        n += lp.len();
        sum += lp.iter().sum::<f64>();
    }
    perplexity(sum, n)
}

/// Trains with truncated BPTT: hidden states flow across consecutive windows of a
/// document as detached constants. Validation perplexity is checked every epoch; the
/// best parameters are restored at the end.
pub fn train_model<T: Real, M: Trainable<T>>(
    model: &mut M,
    train: &[Document],
    valid: &[Document],
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<TrainOutcome> {
    if train.is_empty() || valid.is_empty() {
        return Err(arg_err!("training needs non-empty train and valid splits"));
    }
    if cfg.seq_len < 2 || cfg.batch_size == 0 {
        return Err(arg_err!("seq_len >= 2 and batch_size >= 1 required"));
    }
    let mut opt = Optimizer::new(cfg.optimizer, model.params());
    let mut history = Vec::new();
    let mut best_params = model.params().clone();
    let mut best_epoch = 0;
    let mut stale = 0;

    let last_path = cfg.out_dir.as_ref().map(|d| d.join("last.ckpt"));
    let best_path = cfg.out_dir.as_ref().map(|d| d.join("best.ckpt"));
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if cfg.resume {
        if let Some(p) = last_path.as_ref().filter(|p| p.exists()) {
            let st = Checkpoint::read(p)?;
            load_params(model.params_mut(), &st)?;
            restore_optimizer(&mut opt, &st)?;
            history = parse_history(&st)?;
            stale = meta_usize(&st, "stale")?;
            best_epoch = meta_usize(&st, "best_epoch")?;
            best_params = model.params().clone();
            if let Some(bp) = best_path.as_ref().filter(|p| p.exists()) {
                load_params(&mut best_params, &Checkpoint::read(bp)?)?;
            }
            log::info!("resumed after epoch {}", history.len());
        }
    }

    let cfg_lm = model.lm_config().clone();
    let mut ran = 0;
    let mut finished = true;
    while history.len() < cfg.max_epochs && (history.is_empty() || stale < cfg.patience) {
        if cfg.stop_after.is_some_and(|s| ran >= s) {
            finished = false;
            break;
        }
        let epoch = history.len() + 1;
        let erng = rng.substream(&format!("epoch{epoch}"));
        let mut order = erng.substream("order");
        let mut dropout = erng.substream("dropout");
        let mut noise = erng.substream("noise");
        let mut lanes = LaneStates::<T>::new(cfg_lm.layers, cfg.batch_size, cfg_lm.hidden);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        for batch in batch_sequences(train, cfg.seq_len, cfg.batch_size, Some(&mut order), cfg_lm.conditioning) {
            let init = lanes.gather(&batch.rows)?;
            let mut out = model.batch_loss(
                &batch,
                train,
                &init,
                StepRngs {
                    dropout: &mut dropout,
                    noise: &mut noise,
                },
            )?;
            if !out.loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite training loss at epoch {epoch} (step {})",
                    opt.steps + 1
                )));
            }
            lanes.scatter(&batch.rows, batch.seq_len, &out.final_h, &out.final_c);
            clip_global_norm(&mut out.grads, cfg.clip_norm);
            opt.step(model.params_mut(), &out.grads)?;
            loss_sum += out.loss * out.n_targets as f64;
            tokens += out.n_targets;
        }
        let valid_ppl = corpus_perplexity(model, valid)?;
        if !valid_ppl.is_finite() {
            return Err(Error::Training(format!(
                "validation perplexity diverged at epoch {epoch}: {valid_ppl} (train loss {:.4}, lr {})",
                loss_sum / tokens.max(1) as f64,
                opt.lr
            )));
        }
        let lr = opt.lr;
        let improved = opt.on_validation(valid_ppl);
        if improved {
            best_params = model.params().clone();
            best_epoch = epoch;
            stale = 0;
            if let Some(p) = &best_path {
                model.to_checkpoint().write(p)?;
            }
        } else {
            stale += 1;
        }
        history.push(EpochLog {
            epoch,
            train_loss: loss_sum / tokens.max(1) as f64,
            valid_ppl,
            lr,
        });
        log::info!(
            "epoch {epoch}: train loss {:.4}, valid ppl {valid_ppl:.3}, lr {lr}",
            loss_sum / tokens.max(1) as f64
        );
        if let Some(p) = &last_path {
            train_state(model, &opt, &history, stale, best_epoch).write(p)?;
        }
        ran += 1;
    }
    let best_valid_ppl = opt.best_valid();
    if finished {
        *model.params_mut() = best_params;
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_valid_ppl,
        finished,
    })
}

fn train_state<T: Real, M: Trainable<T>>(
    model: &M,
    opt: &Optimizer<T>,
    history: &[EpochLog],
    stale: usize,
    best_epoch: usize,
) -> Checkpoint {
    let mut ck = model.to_checkpoint();
    let hist: Vec<String> = history
        .iter()
        .map(|h| format!("{}:{:e}:{:e}:{:e}", h.epoch, h.train_loss, h.valid_ppl, h.lr))
        .collect();
    ck.config.push_str(&format!(
        "train.stale={stale}\ntrain.best_epoch={best_epoch}\ntrain.history={}\n",
        hist.join(",")
    ));
    ck.push_f64(
        "opt.meta",
        &[3],
        vec![opt.lr, opt.steps as f64, opt.best_valid()],
    );
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        ck.push_array(&format!("opt.m.{i}"), m);
        ck.push_array(&format!("opt.v.{i}"), v);
    }
    ck
}

fn meta_usize(ck: &Checkpoint, key: &str) -> Result<usize> {
    ck.config_value(&format!("train.{key}"))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("training state lacks {key}")))
}

fn parse_history(ck: &Checkpoint) -> Result<Vec<EpochLog>> {
    let raw = ck
        .config_value("train.history")
        .ok_or_else(|| Error::Format("training state lacks history".into()))?;
    raw.split(',')
        .filter(|s| !s.is_empty())
        .map(|e| {
            let f: Vec<&str> = e.split(':').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad history entry {e}")))
            };
            Ok(EpochLog {
                epoch: num(0)? as usize,
                train_loss: num(1)?,
                valid_ppl: num(2)?,
                lr: num(3)?,
            })
        })
        .collect()
}

fn restore_optimizer<T: Real>(opt: &mut Optimizer<T>, ck: &Checkpoint) -> Result<()> {
    let meta = ck.array::<f64>("opt.meta")?;
    let m = meta.data();
    opt.restore(m[0], m[1] as u64, m[2]);
    for i in 0..opt.m.len() {
        opt.m[i] = ck.array(&format!("opt.m.{i}"))?;
        opt.v[i] = ck.array(&format!("opt.v.{i}"))?;
    }
    Ok(())
}

/// Overwrites parameters by name from a checkpoint.
pub fn load_params<T: Real>(ps: &mut ParamSet<T>, ck: &Checkpoint) -> Result<()> {
    for id in ps.ids().collect::<Vec<_>>() {
        let name = ps.name(id).to_string();
        let a: NumArray<T> = ck.array(&name)?;
        if a.shape() != ps.get(id).shape() {
            return Err(Error::Format(format!("shape mismatch for parameter {name}")));
        }
        *ps.get_mut(id) = a;
    }
    Ok(())
}

/// Writes a model checkpoint, creating parent directories.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ck.write(path)
}
