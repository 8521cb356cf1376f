//! Linear probes of language-model hidden states against topic proportions.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::corpus::{prefix_bag, Document};
use crate::error::{arg_err, Error, Result};
use crate::numerics::linalg::{cholesky_solve, conjugate_gradient};
use crate::numerics::{Grads, Graph, NumArray, ParamSet, Real, Rng};
use crate::rnn::LstmLm;
use crate::tglm::{TglmKind, TopicGuidedLm};

pub const DEFAULT_CHUNK: usize = 30;
pub const DEFAULT_RIDGE: f64 = 1e-4;
const THETA_FLOOR: f64 = 1e-10;

/// `log θ − Σ_j log θ_j` with entries clamped at 1e-10.
pub fn inverse_softmax(theta: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = theta.iter().map(|&t| t.max(THETA_FLOOR).ln()).collect();
    let total: f64 = logs.iter().sum();
    logs.iter().map(|l| l - total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeExample {
    pub doc_id: u32,
    pub offset: u32,
    pub h: Vec<f64>,
    pub target: Vec<f64>,
}

/// Hidden state after reading `x_{<t}` (zeros at `t = 0`) and the inverse-softmax
/// transformed prefix topic estimate at `t`, for chunk starts `t = 0, chunk, 2·chunk, …`.
pub fn extract_probe_dataset<T: Real>(
    lm: &LstmLm<T>,
    tglm: &TopicGuidedLm<T>,
    docs: &[Document],
    chunk: usize,
) -> Result<Vec<ProbeExample>> {
    if chunk == 0 {
        return Err(arg_err!("chunk must be positive"));
    }
    if lm.config().vocab_size != tglm.cfg.lm.vocab_size {
        return Err(Error::Contract(format!(
            "language model vocabulary ({}) differs from topic model vocabulary ({})",
            lm.config().vocab_size,
            tglm.cfg.lm.vocab_size
        )));
    }
    let d = lm.config().hidden;
    let mut out = Vec::new();
    for doc in docs {
        let starts: Vec<usize> = (0..doc.len()).step_by(chunk).collect();
        let hidden = lm.core.doc_hidden(&lm.params, doc);
        let bags: Vec<_> = starts.iter().map(|&t| prefix_bag(doc, &tglm.tv, t)).collect();
        let thetas = tglm.prefix_theta(&bags);
        for (&t, theta) in starts.iter().zip(thetas) {
            let h = if t == 0 {
                vec![0.0; d]
            } else {
                hidden.row(t - 1).iter().map(|x| x.f()).collect()
            };
            let theta = if tglm.kind() == TglmKind::TopicRnn {
                softmax_vec(&theta)
            } else {
                theta
            };
            out.push(ProbeExample {
                doc_id: doc.doc_id,
                offset: t as u32,
                h,
                target: inverse_softmax(&theta),
            });
        }
    }
    Ok(out)
}

fn softmax_vec(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Refuses to pair checkpoints built over different vocabularies.
pub fn check_vocab_hashes(lm: &Checkpoint, tglm: &Checkpoint) -> Result<()> {
    match (lm.config_value("vocab_hash"), tglm.config_value("vocab_hash")) {
        (Some(a), Some(b)) if a == b => Ok(()),
        (a, b) => Err(Error::Contract(format!(
            "vocabulary hash mismatch between checkpoints: {} vs {}",
            a.unwrap_or("missing"),
            b.unwrap_or("missing")
        ))),
    }
}

/// Splits by document: the documents whose ids fall in a random `heldout_frac` share
/// go to the held-out set. Returns `(train, heldout)`.
pub fn split_by_document(examples: Vec<ProbeExample>, heldout_frac: f64, rng: &mut Rng) -> (Vec<ProbeExample>, Vec<ProbeExample>) {
    let mut ids: Vec<u32> = examples.iter().map(|e| e.doc_id).collect();
    ids.sort_unstable();
    ids.dedup();
    rng.shuffle(&mut ids);
    let n_held = ((ids.len() as f64) * heldout_frac).round() as usize;
    let held: std::collections::HashSet<u32> = ids[..n_held.min(ids.len())].iter().copied().collect();
    examples.into_iter().partition(|e| !held.contains(&e.doc_id))
}

/// Writes records `(doc_id u32, offset u32, h f32 × D, target f32 × K)`.
pub fn write_probe_dataset(path: &Path, examples: &[ProbeExample]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for e in examples {
        w.write_all(&e.doc_id.to_le_bytes()).map_err(io)?;
        w.write_all(&e.offset.to_le_bytes()).map_err(io)?;
        for &x in e.h.iter().chain(&e.target) {
            w.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_probe_dataset(path: &Path, d: usize, k: usize) -> Result<Vec<ProbeExample>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let rec = 8 + 4 * (d + k);
    if bytes.len() % rec != 0 {
        return Err(Error::Format(format!(
            "{}: size {} is not a multiple of the record size {rec}",
            path.display(),
            bytes.len()
        )));
    }
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    Ok(bytes
        .chunks_exact(rec)
        .enumerate()
        .map(|(i, r)| {
            let o = i * rec;
            ProbeExample {
                doc_id: u32::from_le_bytes(r[0..4].try_into().unwrap()),
                offset: u32::from_le_bytes(r[4..8].try_into().unwrap()),
                h: (0..d).map(|j| f32_at(o + 8 + 4 * j)).collect(),
                target: (0..k).map(|j| f32_at(o + 8 + 4 * (d + j))).collect(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    /// `K × D`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub d: usize,
    pub k: usize,
}

impl LinearProbe {
    pub fn predict(&self, h: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|j| self.b[j] + self.w[j * self.d..(j + 1) * self.d].iter().zip(h).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeSolver {
    /// Normal equations by Cholesky factorisation.
    Ridge,
    /// Conjugate gradients on the same normal equations.
    Iterative { tol: f64, max_iter: usize },
}

/// Least squares `Σ_n ‖W h_n + b − y_n‖² + λ‖W‖²` (the bias is not penalised).
pub fn train_probe(examples: &[ProbeExample], lambda: f64, solver: ProbeSolver) -> Result<LinearProbe> {
    if examples.len() < 2 {
        return Err(arg_err!("a probe needs at least two examples"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(arg_err!("ridge penalty must be non-negative"));
    }
    let d = examples[0].h.len();
    let k = examples[0].target.len();
    if examples.iter().any(|e| e.h.len() != d || e.target.len() != k) {
        return Err(arg_err!("probe examples of mixed dimensions"));
    }
    let n = d + 1;
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * k];
    let mut x = vec![0.0; n];
    for e in examples {
        x[..d].copy_from_slice(&e.h);
        x[d] = 1.0;
        for i in 0..n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..n {
                a[i * n + j] += xi * x[j];
            }
            for (c, &y) in e.target.iter().enumerate() {
                rhs[i * k + c] += xi * y;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
    for i in 0..d {
        a[i * n + i] += lambda;
    }
    let sol = match solver {
        ProbeSolver::Ridge => cholesky_solve(&a, n, &rhs, k)?,
        ProbeSolver::Iterative { tol, max_iter } => {
            let mut sol = vec![0.0; n * k];
            for c in 0..k {
                let b: Vec<f64> = (0..n).map(|i| rhs[i * k + c]).collect();
                let (xc, _) = conjugate_gradient(&a, n, &b, tol, max_iter);
                if xc.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("probe solver diverged".into()));
                }
                for i in 0..n {
                    sol[i * k + c] = xc[i];
                }
            }
            sol
        }
    };
    let mut w = vec![0.0; k * d];
    for j in 0..k {
        for i in 0..d {
            w[j * d + i] = sol[i * k + j];
        }
    }
    Ok(LinearProbe {
        w,
        b: (0..k).map(|j| sol[d * k + j]).collect(),
        d,
        k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeMetrics {
    pub acc1: f64,
    pub acc5: f64,
    pub r2: f64,
    /// Mean over examples of the summed squared error.
    pub mse: f64,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Rank (0 = largest) of index `i` in `v`, ties going to the lower index.
fn rank_of(v: &[f64], i: usize) -> usize {
    v.iter()
        .enumerate()
        .filter(|&(j, &x)| x > v[i] || (x == v[i] && j < i))
        .count()
}

/// Acc-1, Acc-5 and pooled R² of predictions against targets.
pub fn score_predictions(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<ProbeMetrics> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(arg_err!("need equally many non-zero predictions and targets"));
    }
    let n = targets.len() as f64;
    let k = targets[0].len();
    let mut mean = vec![0.0; k];
    for t in targets {
        for (m, &y) in mean.iter_mut().zip(t) {
            *m += y / n;
        }
    }
    let (mut acc1, mut acc5, mut sse, mut sst) = (0.0, 0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(targets) {
        let truth = argmax(t);
        if argmax(p) == truth {
            acc1 += 1.0;
        }
        if rank_of(p, truth) < 5 {
            acc5 += 1.0;
        }
        for j in 0..k {
            sse += (p[j] - t[j]).powi(2);
            sst += (t[j] - mean[j]).powi(2);
        }
    }
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(ProbeMetrics {
        acc1: acc1 / n,
        acc5: acc5 / n,
        r2,
        mse: sse / n,
    })
}

pub fn probe_metrics(probe: &LinearProbe, heldout: &[ProbeExample]) -> Result<ProbeMetrics> {
    if heldout.is_empty() {
        return Err(arg_err!("held-out set is empty"));
    }
    let preds: Vec<Vec<f64>> = heldout.iter().map(|e| probe.predict(&e.h)).collect();
    let targets: Vec<Vec<f64>> = heldout.iter().map(|e| e.target.clone()).collect();
    score_predictions(&preds, &targets)
}

/// Squared-error objective on the tape with parameters `probe.w` (`[D, K]`) and
/// `probe.b` (`[K]`); used to check gradients of the probe loss.
pub fn probe_loss<T: Real>(ps: &ParamSet<T>, examples: &[ProbeExample], lambda: f64) -> Result<(T, Grads<T>)> {
    let w = ps.find("probe.w").ok_or_else(|| arg_err!("missing probe.w"))?;
    let b = ps.find("probe.b").ok_or_else(|| arg_err!("missing probe.b"))?;
    let d = ps.get(w).rows();
    let k = ps.get(w).cols();
    let xs: Vec<T> = examples.iter().flat_map(|e| e.h.iter().map(|&v| T::c(v))).collect();
    let ys: Vec<T> = examples.iter().flat_map(|e| e.target.iter().map(|&v| T::c(v))).collect();
    let mut g = Graph::new(ps);
    let x = g.constant(NumArray::from_vec(&[examples.len(), d], xs)?);
    let y = g.constant(NumArray::from_vec(&[examples.len(), k], ys)?);
    let (wv, bv) = (g.param(w), g.param(b));
    let z = g.matmul(x, wv);
    let z = g.add_row(z, bv);
    let r = g.sub(z, y);
    let sq = g.square(r);
    let fit = g.sum(sq);
    let w2 = g.square(wv);
    let pen = g.sum(w2);
    let pen = g.scale(pen, T::c(lambda));
    let loss = g.add(fit, pen);
    Ok((g.value(loss).item(), g.backward(loss)))
}
