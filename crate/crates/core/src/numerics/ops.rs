//! Stable scalar/vector nonlinearities and sampling.

use super::{NumArray, Real, Rng};
use crate::error::{arg_err, Error, Result};

fn check_finite<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what}: non-finite input")))
    }
}

#[inline]
pub fn max_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

/// `log Σ exp(v_i)`, shifted by the maximum.
pub fn log_sum_exp<T: Real>(v: &[T]) -> Result<T> {
    if v.is_empty() {
        return Err(arg_err!("log_sum_exp of an empty vector"));
    }
    check_finite(v, "log_sum_exp")?;
    Ok(lse_unchecked(v))
}

#[inline]
pub(crate) fn lse_unchecked<T: Real>(v: &[T]) -> T {
    let m = max_of(v);
    let s: T = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn softmax<T: Real>(v: &NumArray<T>) -> Result<NumArray<T>> {
    if v.shape().len() != 1 {
        return Err(arg_err!("softmax expects a vector, got shape {:?}", v.shape()));
    }
    if v.is_empty() {
        return Err(arg_err!("softmax of an empty vector"));
    }
    check_finite(v.data(), "softmax")?;
    let mut out = v.data().to_vec();
    softmax_in_place(&mut out);
    Ok(NumArray::vector(out))
}

#[inline]
pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let m = max_of(v);
    let mut s = T::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    let inv = T::one() / s;
    for x in v.iter_mut() {
        *x *= inv;
    }
}

pub fn log_softmax<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let z = log_sum_exp(v)?;
    Ok(v.iter().map(|&x| x - z).collect())
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(e^a + e^b)`.
#[inline]
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Draws an index from a probability vector that must lie on the simplex within 1e-6.
pub fn sample_categorical(p: &[f64], rng: &mut Rng) -> Result<usize> {
    if p.is_empty() {
        return Err(arg_err!("categorical over an empty support"));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(arg_err!("categorical probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(arg_err!("categorical probabilities sum to {total}, not 1"));
    }
    Ok(sample_weighted(p, total, rng))
}

/// Inverse-CDF draw from non-negative weights with known positive total.
#[inline]
pub(crate) fn sample_weighted(w: &[f64], total: f64, rng: &mut Rng) -> usize {
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, &x) in w.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // rounding left u just above the accumulated total: last index with mass
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}
