use super::model::{TglmKind, TopicGuidedLm};
use super::objective::bag_matrix;
use crate::corpus::{prefix_bag, CountVector, Document};
use crate::error::{arg_err, Result};
use crate::numerics::{log_add_exp, lse_unchecked, softmax_in_place, softplus, Graph, NumArray, Real};

fn log_softmax_vec(z: &[f64]) -> Vec<f64> {
    let l = lse_unchecked(z);
    z.iter().map(|x| x - l).collect()
}

/// `base + (1−ℓ)·βᵀθ`, with the bias placed on `topic_ids` and zero elsewhere.
/// `beta` is `K × |topic_ids|` row-major.
pub fn topic_bias_logits(base: &[f64], beta: &[f64], topic_ids: &[u32], theta: &[f64], ell: bool) -> Vec<f64> {
    let mut z = base.to_vec();
    if ell {
        return z;
    }
    let w = topic_ids.len();
    for (k, &th) in theta.iter().enumerate() {
        for (j, &id) in topic_ids.iter().enumerate() {
            z[id as usize] += th * beta[k * w + j];
        }
    }
    z
}

/// `Σ_k θ_k softmax(base + (1−ℓ)β_k)` for `θ` on the simplex.
pub fn mixture_next_prob(base: &[f64], beta: &[f64], topic_ids: &[u32], theta: &[f64], ell: bool) -> Vec<f64> {
    let k = theta.len();
    let mut acc = vec![0.0; base.len()];
    for (t, &th) in theta.iter().enumerate() {
        if th == 0.0 {
            continue;
        }
        let mut one_hot = vec![0.0; k];
        one_hot[t] = 1.0;
        let mut p = topic_bias_logits(base, beta, topic_ids, &one_hot, ell);
        softmax_in_place(&mut p);
        for (a, x) in acc.iter_mut().zip(p) {
            *a += th * x;
        }
    }
    acc
}

fn mixture_log_prob(base: &[f64], beta: &[f64], topic_ids: &[u32], theta: &[f64], ell: bool) -> Vec<f64> {
    let k = theta.len();
    let w = topic_ids.len();
    let mut acc = vec![f64::NEG_INFINITY; base.len()];
    for (t, &th) in theta.iter().enumerate() {
        if th <= 0.0 {
            continue;
        }
        let mut one_hot = vec![0.0; k];
        one_hot[t] = 1.0;
        let lp = log_softmax_vec(&topic_bias_logits(base, &beta[..k * w], topic_ids, &one_hot, ell));
        let lt = th.ln();
        for (a, x) in acc.iter_mut().zip(lp) {
            *a = log_add_exp(*a, lt + x);
        }
    }
    acc
}

/// Keeps the `m` largest weights (ties to the lower index) and renormalises.
fn truncate_top_m(theta: &[f64], m: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; theta.len()];
    let kept: f64 = idx.iter().take(m).map(|&i| theta[i]).sum();
    for &i in idx.iter().take(m) {
        out[i] = theta[i] / kept;
    }
    out
}

impl<T: Real> TopicGuidedLm<T> {
    fn beta_f64(&self) -> Vec<f64> {
        self.beta().data().iter().map(|x| x.f()).collect()
    }

    fn base_logits(&self, h: &[T], head_input: Option<&[T]>) -> Vec<f64> {
        let hrow = NumArray::from_vec(&[1, h.len()], h.to_vec()).expect("row shape");
        let head = head_input.map(|v| NumArray::from_vec(&[1, v.len()], v.to_vec()).expect("row shape"));
        self.core
            .logits(&self.params, &hrow, head.as_ref())
            .data()
            .iter()
            .map(|x| x.f())
            .collect()
    }

    /// TopicRNN logits for one hidden state (`θ` real-valued).
    pub fn topicrnn_logits(&self, h: &[T], theta: &[f64], ell: bool) -> Vec<f64> {
        topic_bias_logits(&self.base_logits(h, None), &self.beta_f64(), self.tv.ids(), theta, ell)
    }

    /// VRTM next-word distribution for one hidden state (`θ` on the simplex).
    pub fn vrtm_next_prob(&self, h: &[T], theta: &[f64], ell: bool) -> Vec<f64> {
        mixture_next_prob(&self.base_logits(h, None), &self.beta_f64(), self.tv.ids(), theta, ell)
    }

    /// Raw encoder outputs for bags: posterior mean (variational) or topic proportions
    /// (TDLM), one row per bag.
    pub fn encode_bags(&self, bags: &[CountVector]) -> NumArray<T> {
        let normed: Vec<Vec<T>> = bags.iter().map(|b| b.normalized()).collect();
        let mut g = Graph::new(&self.params);
        let x = g.constant(bag_matrix(&normed, self.tv.len()));
        let out = if self.cfg.kind == TglmKind::Tdlm {
            self.tdlm_theta(&mut g, x)
        } else {
            let hid = self.encoder_hidden(&mut g, x);
            self.parts.head.apply(&mut g, hid)
        };
        g.value(out).clone()
    }

    /// Topic estimate used at prediction time: the posterior mean μ (TopicRNN), its
    /// softmax (VRTM), or the encoder's proportions (TDLM).
    pub fn prefix_theta(&self, bags: &[CountVector]) -> Vec<Vec<f64>> {
        let raw = self.encode_bags(bags);
        (0..raw.rows())
            .map(|r| {
                let row: Vec<f64> = raw.row(r).iter().map(|x| x.f()).collect();
                match self.cfg.kind {
                    TglmKind::Vrtm => log_softmax_vec(&row).into_iter().map(f64::exp).collect(),
                    _ => row,
                }
            })
            .collect()
    }

    /// Log-distributions over V before every predicted token of `doc` (`[T−1, V]`).
    ///
    /// The hidden state runs over the whole document; θ̂ is re-estimated from the
    /// prefix bag at positions 1, 1 + N, 1 + 2N, ... and the stop indicator is
    /// marginalised with the predictor's probability.
    pub fn doc_log_dists(&self, doc: &Document, window: usize) -> Result<NumArray<f64>> {
        if window == 0 {
            return Err(arg_err!("window must be at least 1"));
        }
        let n = doc.num_predictions();
        let v = self.cfg.lm.vocab_size;
        let hs = self.core.doc_hidden(&self.params, doc);
        let refresh: Vec<usize> = (1..=n).step_by(window).collect();
        let bags: Vec<CountVector> = refresh.iter().map(|&t| prefix_bag(doc, &self.tv, t)).collect();
        let thetas = self.prefix_theta(&bags);
        let slot = |i: usize| i / window;
        let mut out = NumArray::zeros(&[n, v]);
        if n == 0 {
            return Ok(out);
        }
        match self.cfg.kind {
            TglmKind::Tdlm => {
                let proj = self.parts.proj.expect("TDLM has a projection");
                let mut g = Graph::new(&self.params);
                let th: Vec<T> = thetas.iter().flatten().map(|&x| T::c(x)).collect();
                let th = g.constant(NumArray::from_vec(&[thetas.len(), self.cfg.k], th)?);
                let p = proj.apply(&mut g, th);
                let p = g.value(p);
                let gi = self.cfg.lm.gru_input;
                let mut head = NumArray::zeros(&[n, gi]);
                for i in 0..n {
                    head.row_mut(i).copy_from_slice(p.row(slot(i)));
                }
                let z = self.core.logits(&self.params, &hs, Some(&head));
                for i in 0..n {
                    let row: Vec<f64> = z.row(i).iter().map(|x| x.f()).collect();
                    out.row_mut(i).copy_from_slice(&log_softmax_vec(&row));
                }
            }
            kind => {
                let mut g = Graph::new(&self.params);
                let hv = g.constant(hs.clone());
                let s = self.stop_score(&mut g, hv);
                let s: Vec<f64> = g.value(s).data().iter().map(|x| x.f()).collect();
                let z = self.core.logits(&self.params, &hs, None);
                let beta = self.beta_f64();
                let ids = self.tv.ids();
                let thetas: Vec<Vec<f64>> = match self.cfg.top_m {
                    Some(m) => thetas.iter().map(|t| truncate_top_m(t, m)).collect(),
                    None => thetas,
                };
                for i in 0..n {
                    let base: Vec<f64> = z.row(i).iter().map(|x| x.f()).collect();
                    let theta = &thetas[slot(i)];
                    let lp1 = log_softmax_vec(&base);
                    let lp0 = if kind == TglmKind::TopicRnn {
                        log_softmax_vec(&topic_bias_logits(&base, &beta, ids, theta, false))
                    } else {
                        mixture_log_prob(&base, &beta, ids, theta, false)
                    };
                    let (l1, l0) = (-softplus(-s[i]), -softplus(s[i]));
                    for (o, (a, b)) in out.row_mut(i).iter_mut().zip(lp1.iter().zip(&lp0)) {
                        *o = log_add_exp(l1 + a, l0 + b);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `log p(x_t | x_{<t})` for every token after SOS.
    pub fn predict_doc(&self, doc: &Document, window: usize) -> Result<Vec<f64>> {
        let d = self.doc_log_dists(doc, window)?;
        Ok((0..d.rows())
            .map(|i| d.get2(i, doc.token_ids[i + 1] as usize))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_off_and_zero_theta_leave_logits() {
        let base = [0.3, -1.0, 2.0, 0.5];
        let beta = [1.0, 2.0, -1.0, 0.5];
        let ids = [1, 3];
        assert_eq!(topic_bias_logits(&base, &beta, &ids, &[0.7, 0.2], true), base);
        assert_eq!(topic_bias_logits(&base, &beta, &ids, &[0.0, 0.0], false), base);
        let z = topic_bias_logits(&base, &beta, &ids, &[1.0, 0.5], false);
        assert_eq!(z[0], base[0]);
        assert_eq!(z[1], -1.0 + 1.0 + 0.5 * -1.0);
        assert_eq!(z[3], 0.5 + 2.0 + 0.5 * 0.5);
    }

    #[test]
    fn top_m_truncation() {
        let t = truncate_top_m(&[0.125, 0.5, 0.125, 0.25], 2);
        assert_eq!(t, vec![0.0, 2.0 / 3.0, 0.0, 1.0 / 3.0]);
        let t = truncate_top_m(&[0.25, 0.25, 0.5], 2);
        assert_eq!(t, vec![1.0 / 3.0, 0.0, 2.0 / 3.0]);
    }
}
