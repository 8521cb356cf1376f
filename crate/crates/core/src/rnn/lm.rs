use std::sync::Arc;

use super::cell::{uniform_init, GruLayer, LstmLayer, RnnState};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{document_windows, Conditioning, Document, RowInfo, SequenceBatch};
use crate::error::{arg_err, Error, Result};
use crate::numerics::{array_gemm, Grads, Graph, NumArray, ParamId, ParamSet, Real, Rng, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub dropout: f64,
    pub with_gru_head: bool,
    /// Width of the GRU head's input (the projected topic vector in TDLM, zeros otherwise).
    pub gru_input: usize,
    pub conditioning: Conditioning,
}

impl LmConfig {
    /// 1-layer, hidden 600, embedding 300, dropout 0.4.
    pub fn paper(vocab_size: usize) -> Self {
        LmConfig {
            vocab_size,
            layers: 1,
            hidden: 600,
            embed: 300,
            dropout: 0.4,
            with_gru_head: false,
            gru_input: 600,
            conditioning: Conditioning::Document,
        }
    }

    pub fn desk(vocab_size: usize) -> Self {
        LmConfig {
            hidden: 128,
            embed: 64,
            gru_input: 128,
            ..Self::paper(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(arg_err!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.vocab_size < 2 || self.layers == 0 || self.hidden == 0 || self.embed == 0 {
            return Err(arg_err!("vocab_size >= 2 and positive layers/hidden/embed required"));
        }
        if self.with_gru_head && self.gru_input == 0 {
            return Err(arg_err!("gru_input must be positive"));
        }
        Ok(())
    }

    pub fn to_config_lines(&self) -> String {
        format!(
            "vocab_size={}\nlayers={}\nhidden={}\nembed={}\ndropout={}\nwith_gru_head={}\ngru_input={}\nconditioning={}\n",
            self.vocab_size,
            self.layers,
            self.hidden,
            self.embed,
            self.dropout,
            self.with_gru_head,
            self.gru_input,
            self.conditioning.as_str()
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ck.config_value(k)
                .ok_or_else(|| Error::Format(format!("checkpoint config lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("bad value for {k}")))
        };
        Ok(LmConfig {
            vocab_size: num("vocab_size")?,
            layers: num("layers")?,
            hidden: num("hidden")?,
            embed: num("embed")?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Format("bad dropout".into()))?,
            with_gru_head: get("with_gru_head")? == "true",
            gru_input: num("gru_input")?,
            conditioning: Conditioning::parse(get("conditioning")?)
                .ok_or_else(|| Error::Format("bad conditioning".into()))?,
        })
    }
}

/// Inverted-dropout mask with entries 0 or `1/(1-p)`.
pub(crate) fn dropout_mask<T: Real>(shape: &[usize], p: f64, rng: &mut Rng) -> NumArray<T> {
    let keep = T::c(1.0 / (1.0 - p));
    NumArray::from_fn(shape, |_| if rng.uniform() < p { T::zero() } else { keep })
}

/// Embedding, LSTM stack, optional GRU head and output projection shared by every
/// recurrent model.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnCore {
    pub cfg: LmConfig,
    pub embed: ParamId,
    pub lstm: Vec<LstmLayer>,
    pub gru: Option<GruLayer>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Graph outputs of one window.
pub struct WindowVars {
    /// Top-layer outputs (after dropout), step-major: row `s * rows + r`.
    pub hidden: Var,
    pub final_h: Vec<Var>,
    pub final_c: Vec<Var>,
}

/// Per-graph parameter handles of the core.
#[derive(Clone, Debug)]
pub struct CoreVars {
    embed: Var,
    lstm: Vec<super::cell::LayerVars>,
    gru: Option<super::cell::LayerVars>,
    out_w: Var,
    out_b: Var,
}

impl RnnCore {
    pub fn init<T: Real>(ps: &mut ParamSet<T>, cfg: &LmConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let embed = ps.add("embed", uniform_init(&[cfg.vocab_size, cfg.embed], rng));
        let lstm = (0..cfg.layers)
            .map(|l| {
                let input = if l == 0 { cfg.embed } else { cfg.hidden };
                LstmLayer::init(ps, &format!("lstm{l}"), input, cfg.hidden, rng)
            })
            .collect();
        let gru = cfg
            .with_gru_head
            .then(|| GruLayer::init(ps, "gru", cfg.gru_input, cfg.hidden, rng));
        let out_w = ps.add("out.w", uniform_init(&[cfg.hidden, cfg.vocab_size], rng));
        let out_b = ps.add("out.b", NumArray::zeros(&[cfg.vocab_size]));
        Ok(RnnCore {
            cfg: cfg.clone(),
            embed,
            lstm,
            gru,
            out_w,
            out_b,
        })
    }

    pub fn bind<T: Real>(ps: &ParamSet<T>, cfg: &LmConfig) -> Result<Self> {
        cfg.validate()?;
        let id = |n: &str| ps.find(n).ok_or_else(|| Error::Format(format!("missing parameter {n}")));
        let core = RnnCore {
            cfg: cfg.clone(),
            embed: id("embed")?,
            lstm: (0..cfg.layers)
                .map(|l| LstmLayer::bind(ps, &format!("lstm{l}")))
                .collect::<Result<_>>()?,
            gru: if cfg.with_gru_head {
                Some(GruLayer::bind(ps, "gru")?)
            } else {
                None
            },
            out_w: id("out.w")?,
            out_b: id("out.b")?,
        };
        if ps.get(core.embed).shape() != [cfg.vocab_size, cfg.embed]
            || ps.get(core.out_w).shape() != [cfg.hidden, cfg.vocab_size]
        {
            return Err(Error::Format("embedding/output shapes disagree with config".into()));
        }
        Ok(core)
    }

    /// Recurrent parameters (LSTM stack and GRU head), excluding input and output
    /// embeddings.
    pub fn recurrent_params(&self) -> usize {
        self.lstm.iter().map(LstmLayer::num_params).sum::<usize>()
            + self.gru.as_ref().map_or(0, GruLayer::num_params)
    }

    pub fn zero_state<T: Real>(&self, rows: usize) -> RnnState<T> {
        RnnState::zeros(self.cfg.layers, rows, self.cfg.hidden)
    }

    pub fn vars<T: Real>(&self, g: &mut Graph<'_, T>) -> CoreVars {
        CoreVars {
            embed: g.param(self.embed),
            lstm: self.lstm.iter().map(|l| l.vars(g)).collect(),
            gru: self.gru.map(|l| l.vars(g)),
            out_w: g.param(self.out_w),
            out_b: g.param(self.out_b),
        }
    }

    /// Runs a padded window through the LSTM stack. `init` is detached (a constant).
    pub fn forward_window<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        cv: &CoreVars,
        batch: &SequenceBatch,
        init: &RnnState<T>,
        mut dropout: Option<&mut Rng>,
    ) -> WindowVars {
        let rows = batch.num_rows();
        let p = self.cfg.dropout;
        let mut h: Vec<Var> = init.h.iter().map(|a| g.constant(a.clone())).collect();
        let mut c: Vec<Var> = init.c.iter().map(|a| g.constant(a.clone())).collect();
        let mut outs = Vec::with_capacity(batch.seq_len);
        for s in 0..batch.seq_len {
            let mut x = g.gather(cv.embed, Arc::new(batch.column(s)));
            for (l, layer) in self.lstm.iter().enumerate() {
                if let Some(rng) = dropout.as_deref_mut().filter(|_| p > 0.0) {
                    let m = g.constant(dropout_mask(&[rows, layer.input], p, rng));
                    x = g.mul(x, m);
                }
                let (h2, c2) = layer.step(g, cv.lstm[l], x, h[l], c[l]);
                h[l] = h2;
                c[l] = c2;
                x = h2;
            }
            if let Some(rng) = dropout.as_deref_mut().filter(|_| p > 0.0) {
                let m = g.constant(dropout_mask(&[rows, self.cfg.hidden], p, rng));
                x = g.mul(x, m);
            }
            outs.push(x);
        }
        let hidden = g.concat_rows(outs);
        WindowVars {
            hidden,
            final_h: h,
            final_c: c,
        }
    }

    /// Logits `[n, V]` from top-layer outputs `h` (`[n, D]`), through the GRU head when
    /// present; `head_input` is the GRU input (`[n, gru_input]`), zeros when `None`.
    pub fn logits_tape<T: Real>(&self, g: &mut Graph<'_, T>, cv: &CoreVars, h: Var, head_input: Option<Var>) -> Var {
        let top = match (self.gru, cv.gru) {
            (Some(layer), Some(lv)) => {
                let n = g.shape(h)[0];
                let v = head_input.unwrap_or_else(|| g.constant(NumArray::zeros(&[n, self.cfg.gru_input])));
                layer.step(g, lv, v, h)
            }
            _ => h,
        };
        let z = g.matmul(top, cv.out_w);
        g.add_row(z, cv.out_b)
    }

    /// Inference step for `rows` tokens; updates `state` and returns the top hidden layer.
    pub fn step<T: Real>(&self, ps: &ParamSet<T>, tokens: &[u32], state: &mut RnnState<T>) -> NumArray<T> {
        let table = ps.get(self.embed);
        let e = self.cfg.embed;
        let mut x = NumArray::zeros(&[tokens.len(), e]);
        for (r, &t) in tokens.iter().enumerate() {
            x.row_mut(r).copy_from_slice(table.row(t as usize));
        }
        for (l, layer) in self.lstm.iter().enumerate() {
            let (h2, c2) = layer.forward(ps, &x, &state.h[l], &state.c[l]);
            state.h[l] = h2;
            state.c[l] = c2;
            x = state.h[l].clone();
        }
        state.detached = true;
        x
    }

    /// Inference logits for top hidden rows `h`.
    pub fn logits<T: Real>(&self, ps: &ParamSet<T>, h: &NumArray<T>, head_input: Option<&NumArray<T>>) -> NumArray<T> {
        let top = match self.gru {
            Some(layer) => {
                let zeros;
                let v = match head_input {
                    Some(v) => v,
                    None => {
                        zeros = NumArray::zeros(&[h.rows(), self.cfg.gru_input]);
                        &zeros
                    }
                };
                layer.forward(ps, v, h)
            }
            None => h.clone(),
        };
        let v = self.cfg.vocab_size;
        let mut z = NumArray::zeros(&[top.rows(), v]);
        for r in 0..top.rows() {
            z.row_mut(r).copy_from_slice(ps.get(self.out_b).data());
        }
        array_gemm(T::one(), &top, ps.get(self.out_w), T::one(), &mut z);
        z
    }

    /// Top hidden state before each predicted token of `doc`, in target order
    /// (`out[i]` precedes target position `i + 1`), honouring the conditioning mode.
    pub fn doc_hidden<T: Real>(&self, ps: &ParamSet<T>, doc: &Document) -> NumArray<T> {
        let d = self.cfg.hidden;
        let mut out = NumArray::zeros(&[doc.num_predictions(), d]);
        let mut row = 0;
        for w in document_windows(doc, usize::MAX, self.cfg.conditioning) {
            let mut state = self.zero_state(1);
            for (&x, t) in w.inputs.iter().zip(&w.targets) {
                let h = self.step(ps, &[x], &mut state);
                if t.is_some() {
                    out.row_mut(row).copy_from_slice(h.row(0));
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, out.rows());
        out
    }
}

/// Per-lane recurrent state for streaming batches.
#[derive(Clone, Debug)]
pub struct LaneStates<T> {
    pub state: RnnState<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> LaneStates<T> {
    pub fn new(layers: usize, lanes: usize, hidden: usize) -> Self {
        LaneStates {
            state: RnnState::zeros(layers, lanes, hidden),
            valid: vec![false; lanes],
        }
    }

    /// Detached initial state for each batch row; zeros for rows that start fresh.
    pub fn gather(&self, rows: &[RowInfo]) -> Result<RnnState<T>> {
        let layers = self.state.h.len();
        let d = self.state.h[0].cols();
        let mut out = RnnState::zeros(layers, rows.len(), d);
        for (r, info) in rows.iter().enumerate() {
            if !info.carryover {
                continue;
            }
            if !self.valid.get(info.lane).copied().unwrap_or(false) {
                return Err(Error::Contract(format!(
                    "carryover row for document {} at offset {} has no stored predecessor state",
                    info.doc_id, info.offset
                )));
            }
            for l in 0..layers {
                out.h[l].row_mut(r).copy_from_slice(self.state.h[l].row(info.lane));
                out.c[l].row_mut(r).copy_from_slice(self.state.c[l].row(info.lane));
            }
        }
        Ok(out)
    }

    /// Stores final states; a lane is valid only after a full-length window.
    pub fn scatter(&mut self, rows: &[RowInfo], seq_len: usize, h: &[NumArray<T>], c: &[NumArray<T>]) {
        for (r, info) in rows.iter().enumerate() {
            for l in 0..h.len() {
                self.state.h[l].row_mut(info.lane).copy_from_slice(h[l].row(r));
                self.state.c[l].row_mut(info.lane).copy_from_slice(c[l].row(r));
            }
            self.valid[info.lane] = info.len == seq_len;
        }
    }
}

/// Flat indices (step-major) and targets of the unmasked positions of a batch.
pub(crate) fn active_positions(batch: &SequenceBatch) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let rows = batch.num_rows();
    let mut idx = Vec::new();
    let mut tgt = Vec::new();
    let mut coords = Vec::new();
    for s in 0..batch.seq_len {
        for r in 0..rows {
            if let Some(t) = batch.target(r, s) {
                idx.push(s * rows + r);
                tgt.push(t as usize);
                coords.push((r, s));
            }
        }
    }
    (idx, tgt, coords)
}

/// Result of one differentiable batch evaluation.
pub struct BatchLoss<T> {
    /// Objective being minimised (per predicted token).
    pub loss: f64,
    /// Summed negative log-likelihood of the predicted tokens.
    pub nll: f64,
    pub n_targets: usize,
    pub grads: Grads<T>,
    pub final_h: Vec<NumArray<T>>,
    pub final_c: Vec<NumArray<T>>,
}

/// LSTM language model (document- or sentence-conditioned, optional GRU head).
#[derive(Clone, Debug)]
pub struct LstmLm<T> {
    pub params: ParamSet<T>,
    pub core: RnnCore,
}

impl<T: Real> LstmLm<T> {
    pub fn new(cfg: &LmConfig, rng: &Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        let core = RnnCore::init(&mut params, cfg, &mut rng.substream("init"))?;
        Ok(LstmLm { params, core })
    }

    pub fn config(&self) -> &LmConfig {
        &self.core.cfg
    }

    /// Per-position log-probabilities `[rows * seq_len, V]` (row-major by batch row) and
    /// the updated lane states. Dropout is applied only when `train_rng` is given.
    pub fn lm_step(
        &self,
        batch: &SequenceBatch,
        lanes: &LaneStates<T>,
        train_rng: Option<&mut Rng>,
    ) -> Result<(NumArray<T>, LaneStates<T>)> {
        let init = lanes.gather(&batch.rows)?;
        let mut g = Graph::new(&self.params);
        let cv = self.core.vars(&mut g);
        let w = self.core.forward_window(&mut g, &cv, batch, &init, train_rng);
        let logits = self.core.logits_tape(&mut g, &cv, w.hidden, None);
        let lp = g.log_softmax_rows(logits);
        let (rows, l) = (batch.num_rows(), batch.seq_len);
        let step_major = g.value(lp);
        let v = self.core.cfg.vocab_size;
        let mut out = NumArray::zeros(&[rows * l, v]);
        for s in 0..l {
            for r in 0..rows {
                out.row_mut(r * l + s).copy_from_slice(step_major.row(s * rows + r));
            }
        }
        let mut next = lanes.clone();
        let fh: Vec<_> = w.final_h.iter().map(|&x| g.value(x).clone()).collect();
        let fc: Vec<_> = w.final_c.iter().map(|&x| g.value(x).clone()).collect();
        next.scatter(&batch.rows, l, &fh, &fc);
        Ok((out, next))
    }

    /// Mean negative log-likelihood of the batch's targets with gradients.
    pub fn batch_loss(&self, batch: &SequenceBatch, init: &RnnState<T>, dropout: Option<&mut Rng>) -> BatchLoss<T> {
        let mut g = Graph::new(&self.params);
        let cv = self.core.vars(&mut g);
        let w = self.core.forward_window(&mut g, &cv, batch, init, dropout);
        let (idx, tgt, _) = active_positions(batch);
        let n = idx.len();
        let h = g.gather(w.hidden, Arc::new(idx));
        let logits = self.core.logits_tape(&mut g, &cv, h, None);
        let picked = g.log_softmax_pick(logits, Arc::new(tgt));
        let total = g.sum(picked);
        let loss = g.scale(total, T::c(-1.0 / n.max(1) as f64));
        let grads = g.backward(loss);
        BatchLoss {
            loss: g.value(loss).item().f(),
            nll: -g.value(total).item().f(),
            n_targets: n,
            grads,
            final_h: w.final_h.iter().map(|&x| g.value(x).clone()).collect(),
            final_c: w.final_c.iter().map(|&x| g.value(x).clone()).collect(),
        }
    }

    /// Full log-distribution over V before every predicted token of `doc`.
    pub fn doc_log_dists(&self, doc: &Document) -> NumArray<T> {
        let h = self.core.doc_hidden(&self.params, doc);
        let mut z = self.core.logits(&self.params, &h, None);
        for r in 0..z.rows() {
            let lse = crate::numerics::lse_unchecked(z.row(r));
            z.row_mut(r).iter_mut().for_each(|x| *x -= lse);
        }
        z
    }

    /// `log p(x_t | history)` for every token after SOS.
    pub fn predict_doc(&self, doc: &Document) -> Vec<f64> {
        let d = self.doc_log_dists(doc);
        (0..d.rows())
            .map(|i| d.get2(i, doc.token_ids[i + 1] as usize).f())
            .collect()
    }

    pub fn to_checkpoint(&self, extra_config: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(
            ModelKind::LstmLm,
            format!("{}{}", self.core.cfg.to_config_lines(), extra_config),
        );
        for (name, a) in self.params.iter() {
            ck.push_array(name, a);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::LstmLm {
            return Err(Error::Format(format!("expected an LSTM checkpoint, found {}", ck.kind.name())));
        }
        let cfg = LmConfig::from_checkpoint(ck)?;
        let params = params_from_checkpoint(ck)?;
        let core = RnnCore::bind(&params, &cfg)?;
        Ok(LstmLm { params, core })
    }
}

pub(crate) fn params_from_checkpoint<T: Real>(ck: &Checkpoint) -> Result<ParamSet<T>> {
    let mut ps = ParamSet::new();
    for r in &ck.records {
        if r.name.starts_with("opt.") || r.name.starts_with("meta.") {
            continue;
        }
        ps.add(r.name.clone(), ck.array::<T>(&r.name)?);
    }
    Ok(ps)
}
