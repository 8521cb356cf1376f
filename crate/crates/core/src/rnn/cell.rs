use crate::error::{arg_err, Result};
use crate::numerics::{sigmoid, Graph, NumArray, ParamId, ParamSet, Real, Rng, Var};

pub(crate) const INIT_SCALE: f64 = 0.1;

pub(crate) fn uniform_init<T: Real>(shape: &[usize], rng: &mut Rng) -> NumArray<T> {
    NumArray::from_fn(shape, |_| T::c(rng.uniform_range(-INIT_SCALE, INIT_SCALE)))
}

/// Hidden (and, for LSTM layers, cell) states of a stack, one `[rows, D]` array per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnState<T> {
    pub h: Vec<NumArray<T>>,
    pub c: Vec<NumArray<T>>,
    /// Detached states carry values only; no gradient flows back through them.
    pub detached: bool,
}

impl<T: Real> RnnState<T> {
    pub fn zeros(layers: usize, rows: usize, hidden: usize) -> Self {
        RnnState {
            h: vec![NumArray::zeros(&[rows, hidden]); layers],
            c: vec![NumArray::zeros(&[rows, hidden]); layers],
            detached: true,
        }
    }

    pub fn top(&self) -> &NumArray<T> {
        self.h.last().expect("state has at least one layer")
    }
}

/// Borrowed LSTM weights; gate blocks are stacked along columns in the order i, f, o, c,
/// so `W_g` is `w[:, g*D..(g+1)*D]` transposed.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams<'a, T> {
    pub w: &'a NumArray<T>,
    pub u: &'a NumArray<T>,
    pub b: &'a NumArray<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LstmGate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

impl<T: Real> LstmParams<'_, T> {
    pub fn input_size(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.u.rows()
    }

    /// `(W_g, U_g, b_g)` with `W_g` of shape `(D, D_in)` and `U_g` of shape `(D, D)`.
    pub fn gate(&self, g: LstmGate) -> (NumArray<T>, NumArray<T>, Vec<T>) {
        let d = self.hidden_size();
        let off = g as usize * d;
        let block = |m: &NumArray<T>| {
            NumArray::from_fn(&[d, m.rows()], |k| m.get2(k % m.rows(), off + k / m.rows()))
        };
        (block(self.w), block(self.u), self.b.data()[off..off + d].to_vec())
    }

    fn check(&self) -> Result<()> {
        let (din, d) = (self.w.rows(), self.u.rows());
        if self.w.cols() != 4 * d || self.u.cols() != 4 * d || self.b.len() != 4 * d {
            return Err(arg_err!(
                "inconsistent LSTM shapes: W {:?}, U {:?}, b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            ));
        }
        debug_assert!(din > 0);
        Ok(())
    }
}

/// One LSTM step for a batch of rows; `v` is `[rows, D_in]`, `h`/`c` are `[rows, D]`.
pub fn lstm_forward<T: Real>(
    p: &LstmParams<T>,
    v: &NumArray<T>,
    h: &NumArray<T>,
    c: &NumArray<T>,
) -> (NumArray<T>, NumArray<T>) {
    let d = p.hidden_size();
    let rows = v.rows();
    let mut pre = NumArray::zeros(&[rows, 4 * d]);
    for r in 0..rows {
        pre.row_mut(r).copy_from_slice(p.b.data());
    }
    crate::numerics::array_gemm(T::one(), v, p.w, T::one(), &mut pre);
    crate::numerics::array_gemm(T::one(), h, p.u, T::one(), &mut pre);
    let mut h2 = NumArray::zeros(&[rows, d]);
    let mut c2 = NumArray::zeros(&[rows, d]);
    for r in 0..rows {
        let g = pre.row(r);
        let (cp, hp) = (c.row(r), h2.row_mut(r));
        let mut cr = vec![T::zero(); d];
        for k in 0..d {
            let i = sigmoid(g[k]);
            let f = sigmoid(g[d + k]);
            let o = sigmoid(g[2 * d + k]);
            let chat = g[3 * d + k].tanh();
            cr[k] = f * cp[k] + i * chat;
            hp[k] = o * cr[k].tanh();
        }
        c2.row_mut(r).copy_from_slice(&cr);
    }
    (h2, c2)
}

/// Single-layer LSTM cell on a state, with shape validation.
pub fn lstm_cell<T: Real>(v: &NumArray<T>, state: &RnnState<T>, p: &LstmParams<T>) -> Result<RnnState<T>> {
    p.check()?;
    let v = if v.shape().len() == 1 {
        v.clone().reshape(&[1, v.len()])?
    } else {
        v.clone()
    };
    let (h, c) = (&state.h[0], &state.c[0]);
    if v.cols() != p.input_size() || h.cols() != p.hidden_size() || c.shape() != h.shape() || h.rows() != v.rows() {
        return Err(arg_err!(
            "LSTM cell shape mismatch: v {:?}, h {:?}, c {:?}, W {:?}",
            v.shape(),
            h.shape(),
            c.shape(),
            p.w.shape()
        ));
    }
    let (h2, c2) = lstm_forward(p, &v, h, c);
    Ok(RnnState {
        h: vec![h2],
        c: vec![c2],
        detached: false,
    })
}

/// Parameter handles of one LSTM layer inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    /// Uniform(-0.1, 0.1) weights, zero biases except +1 on the forget gate.
    pub fn init<T: Real>(ps: &mut ParamSet<T>, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w = ps.add(format!("{prefix}.w"), uniform_init(&[input, 4 * hidden], rng));
        let u = ps.add(format!("{prefix}.u"), uniform_init(&[hidden, 4 * hidden], rng));
        let mut bias = NumArray::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(T::one());
        let b = ps.add(format!("{prefix}.b"), bias);
        LstmLayer { w, u, b, input, hidden }
    }

    pub fn bind<T: Real>(ps: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let id = |s: &str| {
            ps.find(&format!("{prefix}.{s}"))
                .ok_or_else(|| arg_err!("missing parameter {prefix}.{s}"))
        };
        let (w, u, b) = (id("w")?, id("u")?, id("b")?);
        let layer = LstmLayer {
            w,
            u,
            b,
            input: ps.get(w).rows(),
            hidden: ps.get(u).rows(),
        };
        layer.view(ps).check()?;
        Ok(layer)
    }

    pub fn view<'a, T: Real>(&self, ps: &'a ParamSet<T>) -> LstmParams<'a, T> {
        LstmParams {
            w: ps.get(self.w),
            u: ps.get(self.u),
            b: ps.get(self.b),
        }
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, v: &NumArray<T>, h: &NumArray<T>, c: &NumArray<T>) -> (NumArray<T>, NumArray<T>) {
        lstm_forward(&self.view(ps), v, h, c)
    }

    /// Differentiable step: returns `(h', c')`.
    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, pv: LayerVars, v: Var, h: Var, c: Var) -> (Var, Var) {
        let d = self.hidden;
        let xw = g.matmul(v, pv.w);
        let hu = g.matmul(h, pv.u);
        let pre = g.add(xw, hu);
        let pre = g.add_row(pre, pv.b);
        let i = g.slice_cols(pre, 0, d);
        let i = g.sigmoid(i);
        let f = g.slice_cols(pre, d, d);
        let f = g.sigmoid(f);
        let o = g.slice_cols(pre, 2 * d, d);
        let o = g.sigmoid(o);
        let chat = g.slice_cols(pre, 3 * d, d);
        let chat = g.tanh(chat);
        let fc = g.mul(f, c);
        let ic = g.mul(i, chat);
        let c2 = g.add(fc, ic);
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc);
        (h2, c2)
    }

    pub fn vars<T: Real>(&self, g: &mut Graph<'_, T>) -> LayerVars {
        LayerVars {
            w: g.param(self.w),
            u: g.param(self.u),
            u2: None,
            b: g.param(self.b),
        }
    }
}

/// Graph handles of a layer's parameters, created once per graph.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w: Var,
    pub u: Var,
    pub u2: Option<Var>,
    pub b: Var,
}

/// Borrowed GRU weights: `w` is `[D_in, 3D]` (z, r, h blocks), `u_zr` is `[D, 2D]`,
/// `u_h` is `[D, D]`, `b` is `[3D]`.
#[derive(Clone, Copy, Debug)]
pub struct GruParams<'a, T> {
    pub w: &'a NumArray<T>,
    pub u_zr: &'a NumArray<T>,
    pub u_h: &'a NumArray<T>,
    pub b: &'a NumArray<T>,
}

impl<T: Real> GruParams<'_, T> {
    pub fn hidden_size(&self) -> usize {
        self.u_h.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w.rows()
    }

    fn check(&self) -> Result<()> {
        let d = self.hidden_size();
        if self.w.cols() != 3 * d || self.u_zr.shape() != [d, 2 * d] || self.u_h.shape() != [d, d] || self.b.len() != 3 * d {
            return Err(arg_err!(
                "inconsistent GRU shapes: W {:?}, U_zr {:?}, U_h {:?}, b {:?}",
                self.w.shape(),
                self.u_zr.shape(),
                self.u_h.shape(),
                self.b.shape()
            ));
        }
        Ok(())
    }
}

/// One GRU step for a batch: `v` is `[rows, D_in]`, `h` is `[rows, D]`.
pub fn gru_forward<T: Real>(p: &GruParams<T>, v: &NumArray<T>, h: &NumArray<T>) -> NumArray<T> {
    let d = p.hidden_size();
    let rows = v.rows();
    let mut xw = NumArray::zeros(&[rows, 3 * d]);
    for r in 0..rows {
        xw.row_mut(r).copy_from_slice(p.b.data());
    }
    crate::numerics::array_gemm(T::one(), v, p.w, T::one(), &mut xw);
    let mut zr = NumArray::zeros(&[rows, 2 * d]);
    crate::numerics::array_gemm(T::one(), h, p.u_zr, T::zero(), &mut zr);
    let mut z = NumArray::zeros(&[rows, d]);
    let mut rh = NumArray::zeros(&[rows, d]);
    for r in 0..rows {
        let (a, b, hr) = (xw.row(r), zr.row(r), h.row(r));
        for k in 0..d {
            z.row_mut(r)[k] = sigmoid(a[k] + b[k]);
            rh.row_mut(r)[k] = sigmoid(a[d + k] + b[d + k]) * hr[k];
        }
    }
    let mut hu = NumArray::zeros(&[rows, d]);
    crate::numerics::array_gemm(T::one(), &rh, p.u_h, T::zero(), &mut hu);
    let mut out = NumArray::zeros(&[rows, d]);
    for r in 0..rows {
        let (a, hr, zr, u) = (xw.row(r), h.row(r), z.row(r), hu.row(r));
        for (k, o) in out.row_mut(r).iter_mut().enumerate() {
            let hhat = (a[2 * d + k] + u[k]).tanh();
            *o = (T::one() - zr[k]) * hr[k] + zr[k] * hhat;
        }
    }
    out
}

pub fn gru_cell<T: Real>(v: &NumArray<T>, h: &NumArray<T>, p: &GruParams<T>) -> Result<NumArray<T>> {
    p.check()?;
    let as_rows = |a: &NumArray<T>| -> Result<NumArray<T>> {
        if a.shape().len() == 1 {
            a.clone().reshape(&[1, a.len()])
        } else {
            Ok(a.clone())
        }
    };
    let (v, h) = (as_rows(v)?, as_rows(h)?);
    if v.cols() != p.input_size() || h.cols() != p.hidden_size() || v.rows() != h.rows() {
        return Err(arg_err!(
            "GRU cell shape mismatch: v {:?}, h {:?}, W {:?}",
            v.shape(),
            h.shape(),
            p.w.shape()
        ));
    }
    Ok(gru_forward(p, &v, &h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruLayer {
    pub w: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruLayer {
    pub fn init<T: Real>(ps: &mut ParamSet<T>, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w = ps.add(format!("{prefix}.w"), uniform_init(&[input, 3 * hidden], rng));
        let u_zr = ps.add(format!("{prefix}.u_zr"), uniform_init(&[hidden, 2 * hidden], rng));
        let u_h = ps.add(format!("{prefix}.u_h"), uniform_init(&[hidden, hidden], rng));
        let b = ps.add(format!("{prefix}.b"), NumArray::zeros(&[3 * hidden]));
        GruLayer { w, u_zr, u_h, b, input, hidden }
    }

    pub fn bind<T: Real>(ps: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let id = |s: &str| {
            ps.find(&format!("{prefix}.{s}"))
                .ok_or_else(|| arg_err!("missing parameter {prefix}.{s}"))
        };
        let (w, u_zr, u_h, b) = (id("w")?, id("u_zr")?, id("u_h")?, id("b")?);
        let layer = GruLayer {
            w,
            u_zr,
            u_h,
            b,
            input: ps.get(w).rows(),
            hidden: ps.get(u_h).rows(),
        };
        layer.view(ps).check()?;
        Ok(layer)
    }

    pub fn view<'a, T: Real>(&self, ps: &'a ParamSet<T>) -> GruParams<'a, T> {
        GruParams {
            w: ps.get(self.w),
            u_zr: ps.get(self.u_zr),
            u_h: ps.get(self.u_h),
            b: ps.get(self.b),
        }
    }

    pub fn num_params(&self) -> usize {
        3 * self.hidden * (self.input + self.hidden + 1)
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, v: &NumArray<T>, h: &NumArray<T>) -> NumArray<T> {
        gru_forward(&self.view(ps), v, h)
    }

    pub fn vars<T: Real>(&self, g: &mut Graph<'_, T>) -> LayerVars {
        LayerVars {
            w: g.param(self.w),
            u: g.param(self.u_zr),
            u2: Some(g.param(self.u_h)),
            b: g.param(self.b),
        }
    }

    /// Differentiable step `h' = (1 - z) h + z ĥ`.
    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, pv: LayerVars, v: Var, h: Var) -> Var {
        let d = self.hidden;
        let xw = g.matmul(v, pv.w);
        let xw = g.add_row(xw, pv.b);
        let hu = g.matmul(h, pv.u);
        let xzr = g.slice_cols(xw, 0, 2 * d);
        let zr = g.add(xzr, hu);
        let z = g.slice_cols(zr, 0, d);
        let z = g.sigmoid(z);
        let r = g.slice_cols(zr, d, d);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let rhu = g.matmul(rh, pv.u2.expect("GRU vars carry U_h"));
        let xh = g.slice_cols(xw, 2 * d, d);
        let hhat = g.add(xh, rhu);
        let hhat = g.tanh(hhat);
        // h + z (ĥ - h)
        let diff = g.sub(hhat, h);
        let zd = g.mul(z, diff);
        g.add(h, zd)
    }
}
