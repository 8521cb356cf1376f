//! Latent Dirichlet allocation by collapsed Gibbs sampling, prefix-conditional
//! next-word prediction and top-word extraction.

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{prefix_bag, CountVector, Document, TopicVocab};
use crate::error::{arg_err, Error, Result};
use crate::numerics::{sample_weighted, Rng};

/// How `alpha` is spread over topics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaMode {
    /// `alpha` is the total concentration; each topic gets `alpha / K`.
    Total,
    PerTopic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub alpha_mode: AlphaMode,
    /// Symmetric topic-word concentration γ.
    pub beta_hyper: f64,
    pub iterations: usize,
    pub predict_burnin: usize,
    pub predict_samples: usize,
    pub predict_spacing: usize,
    /// Average smoothed topic-word distributions over the last `average_last` sweeps
    /// instead of using only the final sweep.
    pub average_last: usize,
}

impl LdaConfig {
    /// α = 50 (total), γ = 0.01, 1000 sweeps.
    pub fn mallet(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: 50.0,
            alpha_mode: AlphaMode::Total,
            beta_hyper: 0.01,
            iterations: 1000,
            predict_burnin: 50,
            predict_samples: 10,
            predict_spacing: 5,
            average_last: 0,
        }
    }

    pub fn alpha_k(&self) -> f64 {
        match self.alpha_mode {
            AlphaMode::Total => self.alpha / self.k as f64,
            AlphaMode::PerTopic => self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(arg_err!("LDA needs at least one topic"));
        }
        if !(self.alpha > 0.0 && self.beta_hyper > 0.0) {
            return Err(arg_err!("alpha and beta_hyper must be positive"));
        }
        if self.predict_samples == 0 || self.predict_spacing == 0 {
            return Err(arg_err!("predict_samples and predict_spacing must be positive"));
        }
        Ok(())
    }

    fn to_config_lines(&self) -> String {
        format!(
            "k={}\nalpha={}\nalpha_mode={}\nbeta_hyper={}\niterations={}\npredict_burnin={}\npredict_samples={}\npredict_spacing={}\naverage_last={}\n",
            self.k,
            self.alpha,
            match self.alpha_mode {
                AlphaMode::Total => "total",
                AlphaMode::PerTopic => "per_topic",
            },
            self.beta_hyper,
            self.iterations,
            self.predict_burnin,
            self.predict_samples,
            self.predict_spacing,
            self.average_last
        )
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ck.config_value(k)
                .ok_or_else(|| Error::Format(format!("LDA checkpoint lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("bad value for {k}")))
        };
        Ok(LdaConfig {
            k: num("k")? as usize,
            alpha: num("alpha")?,
            alpha_mode: if get("alpha_mode")? == "per_topic" {
                AlphaMode::PerTopic
            } else {
                AlphaMode::Total
            },
            beta_hyper: num("beta_hyper")?,
            iterations: num("iterations")? as usize,
            predict_burnin: num("predict_burnin")? as usize,
            predict_samples: num("predict_samples")? as usize,
            predict_spacing: num("predict_spacing")? as usize,
            average_last: num("average_last")? as usize,
        })
    }
}

/// Token-level state of the collapsed sampler.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub k: usize,
    pub num_words: usize,
    alpha_k: f64,
    gamma: f64,
    pub words: Vec<Vec<u32>>,
    pub z: Vec<Vec<u32>>,
    pub n_dk: Vec<Vec<u32>>,
    pub n_kw: Vec<u32>,
    pub n_k: Vec<u64>,
    scratch: Vec<f64>,
}

impl GibbsState {
    /// Expands bags into tokens and draws initial assignments uniformly.
    pub fn new(bows: &[CountVector], cfg: &LdaConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let num_words = bows.first().map_or(0, CountVector::len);
        if bows.iter().all(|b| b.total() == 0) {
            return Err(arg_err!("LDA needs a non-empty corpus"));
        }
        let (k, w) = (cfg.k, num_words);
        let mut st = GibbsState {
            k,
            num_words: w,
            alpha_k: cfg.alpha_k(),
            gamma: cfg.beta_hyper,
            words: Vec::new(),
            z: Vec::new(),
            n_dk: Vec::new(),
            n_kw: vec![0; k * w],
            n_k: vec![0; k],
            scratch: vec![0.0; k],
        };
        for bag in bows {
            if bag.len() != w {
                return Err(arg_err!("bags of different widths"));
            }
            if bag.total() == 0 {
                log::warn!("skipping empty document {}", bag.doc_id);
                continue;
            }
            let tokens: Vec<u32> = bag
                .nonzeros()
                .flat_map(|(i, c)| std::iter::repeat_n(i as u32, c as usize))
                .collect();
            let mut zs = Vec::with_capacity(tokens.len());
            let mut ndk = vec![0u32; k];
            for &t in &tokens {
                let topic = rng.below(k);
                zs.push(topic as u32);
                ndk[topic] += 1;
                st.n_kw[topic * w + t as usize] += 1;
                st.n_k[topic] += 1;
            }
            st.words.push(tokens);
            st.z.push(zs);
            st.n_dk.push(ndk);
        }
        Ok(st)
    }

    /// One full pass resampling every token's topic from its collapsed conditional.
    pub fn sweep(&mut self, rng: &mut Rng) {
        let (k, w) = (self.k, self.num_words);
        let wg = w as f64 * self.gamma;
        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                let word = self.words[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.n_dk[d][old] -= 1;
                self.n_kw[old * w + word] -= 1;
                self.n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.n_dk[d][t] as f64 + self.alpha_k)
                        * (self.n_kw[t * w + word] as f64 + self.gamma)
                        / (self.n_k[t] as f64 + wg);
                    self.scratch[t] = p;
                    total += p;
                }
                let new = sample_weighted(&self.scratch, total, rng);
                self.z[d][i] = new as u32;
                self.n_dk[d][new] += 1;
                self.n_kw[new * w + word] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Count consistency: per-document topic counts sum to the document length and
    /// topic-word counts sum to the topic totals.
    pub fn counts_consistent(&self) -> bool {
        let docs_ok = self
            .n_dk
            .iter()
            .zip(&self.words)
            .all(|(n, ws)| n.iter().map(|&x| x as usize).sum::<usize>() == ws.len());
        let topics_ok = (0..self.k).all(|t| {
            self.n_kw[t * self.num_words..(t + 1) * self.num_words]
                .iter()
                .map(|&x| x as u64)
                .sum::<u64>()
                == self.n_k[t]
        });
        docs_ok && topics_ok
    }

    /// `(n_kw + γ) / (n_k + Wγ)`, row-major `K × W`.
    pub fn smoothed_topics(&self) -> Vec<f64> {
        let w = self.num_words;
        let wg = w as f64 * self.gamma;
        let mut out = vec![0.0; self.k * w];
        for t in 0..self.k {
            let denom = self.n_k[t] as f64 + wg;
            for v in 0..w {
                out[t * w + v] = (self.n_kw[t * w + v] as f64 + self.gamma) / denom;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    pub cfg: LdaConfig,
    pub num_words: usize,
    /// Topic-word counts from the final sweep, `K × W`.
    pub n_kw: Vec<u32>,
    pub n_k: Vec<u64>,
    /// Smoothed topic-word distributions, `K × W`.
    pub beta: Vec<f64>,
}

pub fn gibbs_train(bows: &[CountVector], cfg: &LdaConfig, rng: &Rng) -> Result<LdaModel> {
    let mut rng = rng.substream("lda.gibbs");
    let mut st = GibbsState::new(bows, cfg, &mut rng)?;
    let mut avg = vec![0.0; cfg.k * st.num_words];
    let averaged = cfg.average_last.min(cfg.iterations);
    for it in 0..cfg.iterations {
        st.sweep(&mut rng);
        if it + averaged >= cfg.iterations && averaged > 0 {
            for (a, b) in avg.iter_mut().zip(st.smoothed_topics()) {
                *a += b / averaged as f64;
            }
        }
    }
    debug_assert!(st.counts_consistent());
    let beta = if averaged > 0 { avg } else { st.smoothed_topics() };
    Ok(LdaModel {
        cfg: cfg.clone(),
        num_words: st.num_words,
        n_kw: st.n_kw,
        n_k: st.n_k,
        beta,
    })
}

impl LdaModel {
    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn topic(&self, k: usize) -> &[f64] {
        &self.beta[k * self.num_words..(k + 1) * self.num_words]
    }

    /// `Σ_k θ_k β̂_k`.
    pub fn mixture(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_words];
        for (t, &th) in theta.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.topic(t)) {
                *o += th * b;
            }
        }
        out
    }

    /// Posterior-mean topic proportions given a bag, by Gibbs sampling over the bag's
    /// tokens with the topics frozen; averages `E[θ | z]` over spaced samples.
    pub fn infer_theta(&self, bag: &CountVector, rng: &mut Rng) -> Vec<f64> {
        let k = self.k();
        let n = bag.total();
        if n == 0 {
            return vec![1.0 / k as f64; k];
        }
        let alpha_k = self.cfg.alpha_k();
        let words: Vec<usize> = bag
            .nonzeros()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c as usize))
            .collect();
        let mut z: Vec<usize> = words.iter().map(|_| rng.below(k)).collect();
        let mut ndk = vec![0u32; k];
        z.iter().for_each(|&t| ndk[t] += 1);
        let mut p = vec![0.0; k];
        let mut theta = vec![0.0; k];
        let c = &self.cfg;
        let sweeps = c.predict_burnin + c.predict_samples * c.predict_spacing;
        let denom = n as f64 + alpha_k * k as f64;
        for s in 1..=sweeps {
            for (i, &word) in words.iter().enumerate() {
                ndk[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    p[t] = (ndk[t] as f64 + alpha_k) * self.beta[t * self.num_words + word];
                    total += p[t];
                }
                z[i] = sample_weighted(&p, total, rng);
                ndk[z[i]] += 1;
            }
            if s > c.predict_burnin && (s - c.predict_burnin).is_multiple_of(c.predict_spacing) {
                for t in 0..k {
                    theta[t] += (ndk[t] as f64 + alpha_k) / denom;
                }
            }
        }
        theta.iter().map(|x| x / c.predict_samples as f64).collect()
    }

    /// Ranked topic-vocabulary indices of topic `k`; ties go to the lower index.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<usize> {
        let row = self.topic(k);
        let mut idx: Vec<usize> = (0..self.num_words).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }

    pub fn to_checkpoint(&self, extra_config: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(
            ModelKind::Lda,
            format!("{}num_words={}\n{extra_config}", self.cfg.to_config_lines(), self.num_words),
        );
        ck.push_u32("n_kw", &[self.k(), self.num_words], self.n_kw.clone());
        ck.push_f64("beta", &[self.k(), self.num_words], self.beta.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Lda {
            return Err(Error::Format(format!("expected an LDA checkpoint, found {}", ck.kind.name())));
        }
        let cfg = LdaConfig::from_checkpoint(ck)?;
        let n_kw = ck.u32s("n_kw")?.to_vec();
        let num_words = n_kw.len() / cfg.k.max(1);
        let n_k = (0..cfg.k)
            .map(|t| n_kw[t * num_words..(t + 1) * num_words].iter().map(|&x| x as u64).sum())
            .collect();
        let beta = ck.array::<f64>("beta")?.into_data();
        if beta.len() != n_kw.len() {
            return Err(Error::Format("LDA beta and counts disagree".into()));
        }
        Ok(LdaModel {
            cfg,
            num_words,
            n_kw,
            n_k,
            beta,
        })
    }
}

/// Predictive distribution over the topic vocabulary given prefix counts: the mixture
/// of topics under the sampled posterior mean of θ (the uniform mixture for an empty
/// prefix).
pub fn lda_next_word(model: &LdaModel, prefix: &CountVector, rng: &mut Rng) -> Vec<f64> {
    model.mixture(&model.infer_theta(prefix, rng))
}

/// Causal predictive distributions before every position `t >= 1` of `doc`, with the
/// prefix estimate refreshed every `window` tokens; sampling seeds depend only on
/// `seed`, the document id and the refresh position.
pub fn lda_predict_doc(model: &LdaModel, doc: &Document, tv: &TopicVocab, window: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if window == 0 {
        return Err(arg_err!("window must be at least 1"));
    }
    let mut out = Vec::with_capacity(doc.num_predictions());
    let mut current = Vec::new();
    for t in 1..doc.len() {
        let refresh = 1 + window * ((t - 1) / window);
        if t == refresh {
            let mut rng = Rng::new(seed).substream(&format!("lda.predict.{}.{refresh}", doc.doc_id));
            current = lda_next_word(model, &prefix_bag(doc, tv, refresh), &mut rng);
        }
        out.push(current.clone());
    }
    Ok(out)
}
