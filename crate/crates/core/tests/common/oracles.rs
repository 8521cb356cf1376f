//! Independent reference computations shared by the integration and acceptance tests.
#![allow(dead_code)]

/// `Γ(a + n) / Γ(a)` for integer `n`.
fn rising(a: f64, n: u32) -> f64 {
    (0..n).map(|i| a + i as f64).product()
}

/// Exact posterior of collapsed LDA over every assignment of `docs` (word ids per
/// document). Returns per-token marginals `[token][k]` and the probability that each
/// pair of tokens shares a topic, tokens numbered in document order.
pub fn lda_enumeration(docs: &[Vec<usize>], v: usize, k: usize, alpha_k: f64, gamma: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let tokens: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(d, ws)| ws.iter().map(move |&w| (d, w)))
        .collect();
    let n = tokens.len();
    let states = k.pow(n as u32);
    let mut marg = vec![vec![0.0; k]; n];
    let mut same = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for s in 0..states {
        let z: Vec<usize> = (0..n).map(|i| (s / k.pow(i as u32)) % k).collect();
        let mut ndk = vec![vec![0u32; k]; docs.len()];
        let mut nkw = vec![vec![0u32; v]; k];
        for (i, &(d, w)) in tokens.iter().enumerate() {
            ndk[d][z[i]] += 1;
            nkw[z[i]][w] += 1;
        }
        let mut p = 1.0;
        for row in &ndk {
            for &c in row {
                p *= rising(alpha_k, c);
            }
        }
        for row in &nkw {
            let nk: u32 = row.iter().sum();
            for &c in row {
                p *= rising(gamma, c);
            }
            p /= rising(v as f64 * gamma, nk);
        }
        total += p;
        for i in 0..n {
            marg[i][z[i]] += p;
            for j in 0..n {
                if z[i] == z[j] {
                    same[i][j] += p;
                }
            }
        }
    }
    for row in marg.iter_mut().chain(same.iter_mut()) {
        row.iter_mut().for_each(|x| *x /= total);
    }
    (marg, same)
}

/// Plain-loop LSTM step in the paper's gate order with separate output-gate bias.
/// Weight matrices are `[out][in]`.
pub struct RefLstm {
    pub wi: Vec<Vec<f64>>,
    pub wf: Vec<Vec<f64>>,
    pub wo: Vec<Vec<f64>>,
    pub wc: Vec<Vec<f64>>,
    pub ui: Vec<Vec<f64>>,
    pub uf: Vec<Vec<f64>>,
    pub uo: Vec<Vec<f64>>,
    pub uc: Vec<Vec<f64>>,
    pub bi: Vec<f64>,
    pub bf: Vec<f64>,
    pub bo: Vec<f64>,
    pub bc: Vec<f64>,
}

fn affine(w: &[Vec<f64>], x: &[f64], u: &[Vec<f64>], h: &[f64], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|j| {
            b[j] + w[j].iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
                + u[j].iter().zip(h).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RefLstm {
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let i: Vec<f64> = affine(&self.wi, x, &self.ui, h, &self.bi).into_iter().map(sig).collect();
        let f: Vec<f64> = affine(&self.wf, x, &self.uf, h, &self.bf).into_iter().map(sig).collect();
        let o: Vec<f64> = affine(&self.wo, x, &self.uo, h, &self.bo).into_iter().map(sig).collect();
        let g: Vec<f64> = affine(&self.wc, x, &self.uc, h, &self.bc).into_iter().map(f64::tanh).collect();
        let c2: Vec<f64> = (0..c.len()).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let h2: Vec<f64> = (0..c.len()).map(|j| o[j] * c2[j].tanh()).collect();
        (h2, c2)
    }
}

/// Plain-loop GRU step: `h' = (1 − z) h + z ĥ`.
pub struct RefGru {
    pub wz: Vec<Vec<f64>>,
    pub wr: Vec<Vec<f64>>,
    pub wh: Vec<Vec<f64>>,
    pub uz: Vec<Vec<f64>>,
    pub ur: Vec<Vec<f64>>,
    pub uh: Vec<Vec<f64>>,
    pub bz: Vec<f64>,
    pub br: Vec<f64>,
    pub bh: Vec<f64>,
}

impl RefGru {
    pub fn step(&self, v: &[f64], h: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = affine(&self.wz, v, &self.uz, h, &self.bz).into_iter().map(sig).collect();
        let r: Vec<f64> = affine(&self.wr, v, &self.ur, h, &self.br).into_iter().map(sig).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let hh: Vec<f64> = affine(&self.wh, v, &self.uh, &rh, &self.bh).into_iter().map(f64::tanh).collect();
        (0..h.len()).map(|j| (1.0 - z[j]) * h[j] + z[j] * hh[j]).collect()
    }
}

/// NPMI from raw window counts.
pub fn npmi_from_counts(joint: f64, a: f64, b: f64, windows: f64) -> f64 {
    if joint == 0.0 {
        return -1.0;
    }
    let pj = joint / windows;
    let pmi = (pj / ((a / windows) * (b / windows))).ln();
    pmi / -pj.ln()
}
