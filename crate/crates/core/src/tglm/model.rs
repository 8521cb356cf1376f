use std::collections::HashSet;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{Conditioning, TopicVocab};
use crate::error::{arg_err, Error, Result};
use crate::numerics::{Graph, NumArray, ParamId, ParamSet, Real, Rng, Var};
use crate::rnn::{params_from_checkpoint, uniform_init, LmConfig, RnnCore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TglmKind {
    TopicRnn,
    Vrtm,
    Tdlm,
}

impl TglmKind {
    pub const ALL: [TglmKind; 3] = [TglmKind::TopicRnn, TglmKind::Vrtm, TglmKind::Tdlm];

    pub fn model_kind(self) -> ModelKind {
        match self {
            TglmKind::TopicRnn => ModelKind::TopicRnn,
            TglmKind::Vrtm => ModelKind::Vrtm,
            TglmKind::Tdlm => ModelKind::Tdlm,
        }
    }

    pub fn from_model_kind(kind: ModelKind) -> Option<Self> {
        match kind {
            ModelKind::TopicRnn => Some(TglmKind::TopicRnn),
            ModelKind::Vrtm => Some(TglmKind::Vrtm),
            ModelKind::Tdlm => Some(TglmKind::Tdlm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        self.model_kind().name()
    }

    /// Variational models (Gaussian posterior over the topic vector).
    pub fn is_variational(self) -> bool {
        self != TglmKind::Tdlm
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TglmConfig {
    pub kind: TglmKind,
    pub lm: LmConfig,
    pub k: usize,
    pub enc_hidden: usize,
    /// Hidden width of the TopicRNN stop-word MLP.
    pub stop_hidden: usize,
    /// Tokens between refreshes of the prefix topic estimate at prediction time.
    pub window: usize,
    /// VRTM only: keep the `m` largest topic weights (renormalised) at prediction time.
    pub top_m: Option<usize>,
}

impl TglmConfig {
    /// Desk-scale defaults: K = 10 on the desk LSTM. TDLM gets its GRU head.
    pub fn desk(kind: TglmKind, vocab_size: usize) -> Self {
        let mut lm = LmConfig::desk(vocab_size);
        lm.with_gru_head = kind == TglmKind::Tdlm;
        TglmConfig {
            kind,
            lm,
            k: 10,
            enc_hidden: 200,
            stop_hidden: 200,
            window: 30,
            top_m: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lm.validate()?;
        if self.k == 0 || self.enc_hidden == 0 || self.stop_hidden == 0 {
            return Err(arg_err!("k, enc_hidden and stop_hidden must be positive"));
        }
        if self.window == 0 {
            return Err(arg_err!("window must be at least 1"));
        }
        if self.lm.conditioning != Conditioning::Document {
            return Err(arg_err!("topic-guided models condition on the whole document"));
        }
        if self.lm.with_gru_head != (self.kind == TglmKind::Tdlm) {
            return Err(arg_err!("the GRU head is used by TDLM and only by TDLM"));
        }
        if let Some(m) = self.top_m {
            if m == 0 || self.kind != TglmKind::Vrtm {
                return Err(arg_err!("top_m applies to VRTM and must be positive"));
            }
        }
        Ok(())
    }

    pub fn to_config_lines(&self) -> String {
        format!(
            "{}k={}\nenc_hidden={}\nstop_hidden={}\nwindow={}\ntop_m={}\n",
            self.lm.to_config_lines(),
            self.k,
            self.enc_hidden,
            self.stop_hidden,
            self.window,
            self.top_m.unwrap_or(0)
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind = TglmKind::from_model_kind(ck.kind)
            .ok_or_else(|| Error::Format(format!("{} is not a topic-guided model", ck.kind.name())))?;
        let num = |k: &str| -> Result<usize> {
            ck.config_value(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("checkpoint config lacks {k}")))
        };
        let top_m = num("top_m")?;
        Ok(TglmConfig {
            kind,
            lm: LmConfig::from_checkpoint(ck)?,
            k: num("k")?,
            enc_hidden: num("enc_hidden")?,
            stop_hidden: num("stop_hidden")?,
            window: num("window")?,
            top_m: (top_m > 0).then_some(top_m),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    fn init<T: Real>(ps: &mut ParamSet<T>, name: &str, din: usize, dout: usize, rng: &mut Rng) -> Self {
        Dense {
            w: ps.add(format!("{name}.w"), uniform_init(&[din, dout], rng)),
            b: ps.add(format!("{name}.b"), NumArray::zeros(&[dout])),
        }
    }

    fn bind<T: Real>(ps: &ParamSet<T>, name: &str) -> Result<Self> {
        let id = |n: String| ps.find(&n).ok_or_else(|| Error::Format(format!("missing parameter {n}")));
        Ok(Dense {
            w: id(format!("{name}.w"))?,
            b: id(format!("{name}.b"))?,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.matmul(x, w);
        g.add_row(z, b)
    }
}

/// Parameter handles beyond the recurrent core.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct TopicParts {
    pub enc1: Dense,
    pub enc2: Dense,
    /// Posterior mean (variational) or topic logits (TDLM).
    pub head: Dense,
    /// Posterior log-variance (variational only).
    pub logvar: Option<Dense>,
    /// `K × |TopicVocab|`: additive biases (TopicRNN/VRTM) or topic-word logits (TDLM).
    pub beta: ParamId,
    /// Stop-word predictor layers: one (linear) or two (MLP).
    pub stop: Vec<Dense>,
    /// TDLM: projection of θ to the GRU input.
    pub proj: Option<Dense>,
}

/// TopicRNN, VRTM or TDLM on top of a shared LSTM core.
#[derive(Clone, Debug)]
pub struct TopicGuidedLm<T> {
    pub cfg: TglmConfig,
    pub params: ParamSet<T>,
    pub core: RnnCore,
    pub(crate) parts: TopicParts,
    pub tv: TopicVocab,
    /// `stop[v]` marks stop-list vocabulary ids (ℓ = 1 when the next token is one).
    pub stop: Vec<bool>,
}

impl<T: Real> TopicGuidedLm<T> {
    /// `stop_ids` are the vocabulary ids on the stop list.
    pub fn new(cfg: &TglmConfig, tv: &TopicVocab, stop_ids: &HashSet<u32>, rng: &Rng) -> Result<Self> {
        cfg.validate()?;
        if tv.vocab_len() != cfg.lm.vocab_size {
            return Err(arg_err!(
                "topic vocabulary covers {} ids, model vocabulary has {}",
                tv.vocab_len(),
                cfg.lm.vocab_size
            ));
        }
        if tv.is_empty() {
            return Err(arg_err!("empty topic vocabulary"));
        }
        let mut rng = rng.substream("init");
        let mut ps = ParamSet::new();
        let core = RnnCore::init(&mut ps, &cfg.lm, &mut rng)?;
        let (w, h, k, d) = (tv.len(), cfg.enc_hidden, cfg.k, cfg.lm.hidden);
        let enc1 = Dense::init(&mut ps, "enc1", w, h, &mut rng);
        let enc2 = Dense::init(&mut ps, "enc2", h, h, &mut rng);
        let head = Dense::init(&mut ps, "enc.head", h, k, &mut rng);
        let logvar = cfg
            .kind
            .is_variational()
            .then(|| Dense::init(&mut ps, "enc.logvar", h, k, &mut rng));
        let beta = ps.add("beta", uniform_init(&[k, w], &mut rng));
        let stop = match cfg.kind {
            TglmKind::TopicRnn => vec![
                Dense::init(&mut ps, "stop1", d, cfg.stop_hidden, &mut rng),
                Dense::init(&mut ps, "stop2", cfg.stop_hidden, 1, &mut rng),
            ],
            TglmKind::Vrtm => vec![Dense::init(&mut ps, "stop1", d, 1, &mut rng)],
            TglmKind::Tdlm => Vec::new(),
        };
        let proj = (cfg.kind == TglmKind::Tdlm).then(|| Dense::init(&mut ps, "proj", k, cfg.lm.gru_input, &mut rng));
        let mut stop_mask = vec![false; cfg.lm.vocab_size];
        for &s in stop_ids {
            *stop_mask
                .get_mut(s as usize)
                .ok_or_else(|| arg_err!("stop id {s} outside the vocabulary"))? = true;
        }
        Ok(TopicGuidedLm {
            cfg: cfg.clone(),
            params: ps,
            core,
            parts: TopicParts {
                enc1,
                enc2,
                head,
                logvar,
                beta,
                stop,
                proj,
            },
            tv: tv.clone(),
            stop: stop_mask,
        })
    }

    pub fn kind(&self) -> TglmKind {
        self.cfg.kind
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    /// Topic matrix `K × |TopicVocab|` as stored (biases or logits).
    pub fn beta(&self) -> &NumArray<T> {
        self.params.get(self.parts.beta)
    }

    /// Hidden layers of the bag-of-words encoder on L1-normalised bags `[n, W]`.
    pub(crate) fn encoder_hidden(&self, g: &mut Graph<'_, T>, bags: Var) -> Var {
        let a = self.parts.enc1.apply(g, bags);
        let a = g.tanh(a);
        let b = self.parts.enc2.apply(g, a);
        g.tanh(b)
    }

    /// Stop-word score `s` (`[n, 1]`, ℓ = 1 with probability σ(s)) for hidden rows.
    pub(crate) fn stop_score(&self, g: &mut Graph<'_, T>, h: Var) -> Var {
        let mut x = h;
        let last = self.parts.stop.len() - 1;
        for (i, layer) in self.parts.stop.iter().enumerate() {
            x = layer.apply(g, x);
            if i < last {
                x = g.tanh(x);
            }
        }
        x
    }

    /// Ranked topic-vocabulary indices of topic `k`; ties go to the lower index.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<usize> {
        let row = self.beta().row(k);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }

    pub fn to_checkpoint(&self, extra_config: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.cfg.kind.model_kind(),
            format!(
                "{}topic_vocab_hash={}\n{extra_config}",
                self.cfg.to_config_lines(),
                self.tv.hash()
            ),
        );
        for (name, a) in self.params.iter() {
            ck.push_array(name, a);
        }
        ck.push_u32("meta.topic_ids", &[self.tv.len()], self.tv.ids().to_vec());
        let stops: Vec<u32> = (0..self.stop.len() as u32).filter(|&v| self.stop[v as usize]).collect();
        ck.push_u32("meta.stop_ids", &[stops.len()], stops);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = TglmConfig::from_checkpoint(ck)?;
        cfg.validate()?;
        let params = params_from_checkpoint::<T>(ck)?;
        let core = RnnCore::bind(&params, &cfg.lm)?;
        let tv = TopicVocab::from_ids(cfg.lm.vocab_size, ck.u32s("meta.topic_ids")?)?;
        if ck.config_value("topic_vocab_hash") != Some(tv.hash().as_str()) {
            return Err(Error::Format("topic vocabulary hash does not match its ids".into()));
        }
        let mut stop = vec![false; cfg.lm.vocab_size];
        for &s in ck.u32s("meta.stop_ids")? {
            *stop
                .get_mut(s as usize)
                .ok_or_else(|| Error::Format(format!("stop id {s} outside the vocabulary")))? = true;
        }
        let id = |n: &str| params.find(n).ok_or_else(|| Error::Format(format!("missing parameter {n}")));
        let parts = TopicParts {
            enc1: Dense::bind(&params, "enc1")?,
            enc2: Dense::bind(&params, "enc2")?,
            head: Dense::bind(&params, "enc.head")?,
            logvar: if cfg.kind.is_variational() {
                Some(Dense::bind(&params, "enc.logvar")?)
            } else {
                None
            },
            beta: id("beta")?,
            stop: match cfg.kind {
                TglmKind::TopicRnn => vec![Dense::bind(&params, "stop1")?, Dense::bind(&params, "stop2")?],
                TglmKind::Vrtm => vec![Dense::bind(&params, "stop1")?],
                TglmKind::Tdlm => Vec::new(),
            },
            proj: if cfg.kind == TglmKind::Tdlm {
                Some(Dense::bind(&params, "proj")?)
            } else {
                None
            },
        };
        if params.get(parts.beta).shape() != [cfg.k, tv.len()] {
            return Err(Error::Format("topic matrix shape disagrees with config".into()));
        }
        Ok(TopicGuidedLm {
            cfg,
            params,
            core,
            parts,
            tv,
            stop,
        })
    }
}
