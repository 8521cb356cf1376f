use std::collections::HashMap;
use std::sync::Arc;

use super::model::{TglmKind, TopicGuidedLm};
use crate::corpus::{bag_of_words, Document, SequenceBatch};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NumArray, Real, Rng, Var};
use crate::rnn::{active_positions, BatchLoss, RnnState};

/// Row-stacked L1-normalised bags `[n, W]`.
pub(crate) fn bag_matrix<T: Real>(bags: &[Vec<T>], width: usize) -> NumArray<T> {
    let mut m = NumArray::zeros(&[bags.len(), width]);
    for (r, b) in bags.iter().enumerate() {
        m.row_mut(r).copy_from_slice(b);
    }
    m
}

/// Components of a batch objective, each summed over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    /// Word negative log-likelihood.
    pub nll: f64,
    /// Weighted KL (variational models).
    pub kl: f64,
    /// Stop-word cross-entropy (variational models).
    pub stop_bce: f64,
    /// Negative topic-model log-likelihood of the document bags (TDLM).
    pub topic_nll: f64,
}

impl<T: Real> TopicGuidedLm<T> {
    /// Loss per predicted token on one batch, with gradients.
    ///
    /// Variational models: one reparameterised draw of θ per row from q(θ | full-document
    /// bag), observed stop labels, and each row's KL weighted by the fraction of its
    /// document's predictions that the row carries (so a document's windows add up to
    /// one KL term). TDLM: the full-document topic-model likelihood weighted the same
    /// way, plus the language-model term with θ encoded from the document bag minus the
    /// sentence of each predicted token.
    pub fn batch_objective(
        &self,
        batch: &SequenceBatch,
        docs: &[Document],
        init: &RnnState<T>,
        dropout: Option<&mut Rng>,
        noise: &mut Rng,
    ) -> Result<(BatchLoss<T>, LossParts)> {
        let mut g = Graph::new(&self.params);
        let cv = self.core.vars(&mut g);
        let win = self.core.forward_window(&mut g, &cv, batch, init, dropout);
        let (idx, tgt, coords) = active_positions(batch);
        let n = idx.len();
        let h = g.gather(win.hidden, Arc::new(idx));
        let rows = batch.num_rows();
        let wlen = self.tv.len();
        let row_docs: Vec<&Document> = batch
            .rows
            .iter()
            .map(|r| {
                docs.get(r.doc)
                    .ok_or_else(|| Error::Contract(format!("batch row refers to missing document {}", r.doc)))
            })
            .collect::<Result<_>>()?;
        let weights: Vec<T> = (0..rows)
            .map(|r| T::c(batch.row_targets(r) as f64 / row_docs[r].num_predictions().max(1) as f64))
            .collect();
        let full_bags: Vec<_> = row_docs
            .iter()
            .map(|d| bag_of_words(d, &self.tv, None))
            .collect::<Result<_>>()?;
        let row_of: Vec<usize> = coords.iter().map(|&(r, _)| r).collect();

        let mut parts = LossParts {
            nll: 0.0,
            kl: 0.0,
            stop_bce: 0.0,
            topic_nll: 0.0,
        };
        let mut terms: Vec<Var> = Vec::new();
        let picked = match self.cfg.kind {
            TglmKind::TopicRnn | TglmKind::Vrtm => {
                let normed: Vec<Vec<T>> = full_bags.iter().map(|b| b.normalized()).collect();
                let x = g.constant(bag_matrix(&normed, wlen));
                let eps = NumArray::from_fn(&[rows, self.cfg.k], |_| T::c(noise.normal()));
                let (sample, kl_rows) = self.posterior_sample(&mut g, x, eps);
                let w = g.constant(NumArray::vector(weights));
                let kl = g.dot(kl_rows, w);
                let klv = g.value(kl).item().f();
                if !klv.is_finite() {
                    return Err(Error::Training(format!("non-finite KL term {klv}")));
                }
                parts.kl = klv;
                terms.push(kl);

                let ell: Vec<T> = tgt.iter().map(|&t| if self.stop[t] { T::one() } else { T::zero() }).collect();
                let s = self.stop_score(&mut g, h);
                let sp = g.softplus(s);
                let sp = g.sum(sp);
                let y = g.constant(NumArray::from_vec(&[n, 1], ell.clone())?);
                let sy = g.dot(s, y);
                let bce = g.sub(sp, sy);
                parts.stop_bce = g.value(bce).item().f();
                terms.push(bce);

                let theta = g.gather(sample, Arc::new(row_of));
                let z = self.core.logits_tape(&mut g, &cv, h, None);
                let gate: Arc<Vec<T>> = Arc::new(ell.iter().map(|&l| T::one() - l).collect());
                self.word_log_probs(&mut g, z, theta, gate, Arc::new(tgt))
            }
            TglmKind::Tdlm => {
                let proj = self.parts.proj.expect("TDLM has a projection");
                let normed: Vec<Vec<T>> = full_bags.iter().map(|b| b.normalized()).collect();
                let x = g.constant(bag_matrix(&normed, wlen));
                let theta_tm = self.tdlm_theta(&mut g, x);
                let beta = g.param(self.parts.beta);
                let topics = g.softmax_rows(beta);
                let mix = g.matmul(theta_tm, topics);
                let logmix = g.log(mix);
                let mut counts = NumArray::zeros(&[rows, wlen]);
                for r in 0..rows {
                    for (c, &k) in counts.row_mut(r).iter_mut().zip(&full_bags[r].counts) {
                        *c = T::c(k as f64) * weights[r];
                    }
                }
                let counts = g.constant(counts);
                let ll = g.dot(logmix, counts);
                let tm = g.scale(ll, T::c(-1.0));
                parts.topic_nll = g.value(tm).item().f();
                terms.push(tm);

                let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
                let mut excl: Vec<Vec<T>> = Vec::new();
                let mut pos_slot = Vec::with_capacity(n);
                for &(r, s) in &coords {
                    let doc = row_docs[r];
                    let sent = doc.sentence_of(batch.rows[r].offset + s + 1);
                    let next = excl.len();
                    let id = *slot.entry((r, sent)).or_insert(next);
                    if id == next {
                        excl.push(bag_of_words(doc, &self.tv, Some(sent))?.normalized());
                    }
                    pos_slot.push(id);
                }
                let xe = g.constant(bag_matrix(&excl, wlen));
                let theta_lm = self.tdlm_theta(&mut g, xe);
                let p = proj.apply(&mut g, theta_lm);
                let head = g.gather(p, Arc::new(pos_slot));
                let z = self.core.logits_tape(&mut g, &cv, h, Some(head));
                g.log_softmax_pick(z, Arc::new(tgt))
            }
        };
        let total = g.sum(picked);
        parts.nll = -g.value(total).item().f();
        let mut obj = g.scale(total, T::c(-1.0));
        for t in terms {
            obj = g.add(obj, t);
        }
        let loss = g.scale(obj, T::c(1.0 / n.max(1) as f64));
        let grads = g.backward(loss);
        Ok((
            BatchLoss {
                loss: g.value(loss).item().f(),
                nll: parts.nll,
                n_targets: n,
                grads,
                final_h: win.final_h.iter().map(|&v| g.value(v).clone()).collect(),
                final_c: win.final_c.iter().map(|&v| g.value(v).clone()).collect(),
            },
            parts,
        ))
    }

    /// Reparameterised draw `μ + σ ⊙ ε` and per-row `KL(q ‖ N(0, I))`.
    pub(crate) fn posterior_sample(&self, g: &mut Graph<'_, T>, bags: Var, eps: NumArray<T>) -> (Var, Var) {
        let hid = self.encoder_hidden(g, bags);
        let mu = self.parts.head.apply(g, hid);
        let lv = self.parts.logvar.expect("variational encoder").apply(g, hid);
        let half = g.scale(lv, T::c(0.5));
        let sd = g.exp(half);
        let e = g.constant(eps);
        let noise = g.mul(sd, e);
        let sample = g.add(mu, noise);
        let mu2 = g.square(mu);
        let var = g.exp(lv);
        let a = g.add(mu2, var);
        let b = g.sub(a, lv);
        let c = g.add_scalar(b, T::c(-1.0));
        let rs = g.row_sum(c);
        (sample, g.scale(rs, T::c(0.5)))
    }

    /// TDLM topic proportions (softmax of the encoder output).
    pub(crate) fn tdlm_theta(&self, g: &mut Graph<'_, T>, bags: Var) -> Var {
        let hid = self.encoder_hidden(g, bags);
        let z = self.parts.head.apply(g, hid);
        g.softmax_rows(z)
    }

    /// `log p(x_t | h_t, θ, ℓ_t)` for biased logits. TopicRNN adds `(1−ℓ)βᵀθ` before
    /// normalising; VRTM mixes `K` softmaxes with weights `softmax(θ)`.
    fn word_log_probs(&self, g: &mut Graph<'_, T>, z: Var, theta: Var, gate: Arc<Vec<T>>, tgt: Arc<Vec<usize>>) -> Var {
        let cols: Arc<Vec<usize>> = Arc::new(self.tv.ids().iter().map(|&i| i as usize).collect());
        let beta = g.param(self.parts.beta);
        match self.cfg.kind {
            TglmKind::TopicRnn => {
                let bias = g.matmul(theta, beta);
                let zb = g.scatter_add_gated(z, bias, cols, gate);
                g.log_softmax_pick(zb, tgt)
            }
            _ => {
                let log_theta = g.log_softmax_rows(theta);
                let comps: Vec<Var> = (0..self.cfg.k)
                    .map(|k| {
                        let bk = g.slice_rows(beta, k, 1);
                        let zk = g.scatter_add_gated(z, bk, cols.clone(), gate.clone());
                        g.log_softmax_pick(zk, tgt.clone())
                    })
                    .collect();
                let stacked = g.concat_cols(comps);
                let joint = g.add(stacked, log_theta);
                g.log_sum_exp_rows(joint)
            }
        }
    }
}
