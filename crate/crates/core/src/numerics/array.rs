use super::Real;
use crate::error::{arg_err, Result};

/// Dense row-major tensor. Almost everything in the crate is rank 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct NumArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> NumArray<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        NumArray {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        NumArray {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(arg_err!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            ));
        }
        Ok(NumArray {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<T>) -> Self {
        NumArray {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: T) -> Self {
        NumArray {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        NumArray {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension; a vector counts as a single row.
    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Product of trailing dimensions.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(arg_err!("cannot reshape {:?} to {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        NumArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> NumArray<U> {
        NumArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::c(x.f())).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &NumArray<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    /// Matrix product `op(self) * op(other)` for rank-2 operands.
    pub fn matmul(&self, other: &NumArray<T>, trans_a: bool, trans_b: bool) -> Result<Self> {
        let (m, ka) = dims2(self, trans_a);
        let (kb, n) = dims2(other, trans_b);
        if ka != kb {
            return Err(arg_err!(
                "matmul inner dimensions differ: {:?}{} x {:?}{}",
                self.shape,
                if trans_a { "^T" } else { "" },
                other.shape,
                if trans_b { "^T" } else { "" }
            ));
        }
        let mut out = NumArray::zeros(&[m, n]);
        gemm_acc(
            T::one(),
            self,
            trans_a,
            other,
            trans_b,
            T::zero(),
            &mut out.data,
        );
        Ok(out)
    }
}

/// Logical (rows, cols) of a rank-2 operand after optional transposition.
pub(crate) fn dims2<T: Real>(a: &NumArray<T>, trans: bool) -> (usize, usize) {
    let (r, c) = (a.rows(), a.cols());
    if trans {
        (c, r)
    } else {
        (r, c)
    }
}

fn strides<T: Real>(a: &NumArray<T>, trans: bool) -> (isize, isize) {
    let c = a.cols() as isize;
    if trans {
        (1, c)
    } else {
        (c, 1)
    }
}

/// `out = alpha * a b + beta * out` for rank-2 arrays.
pub(crate) fn array_gemm<T: Real>(alpha: T, a: &NumArray<T>, b: &NumArray<T>, beta: T, out: &mut NumArray<T>) {
    debug_assert_eq!(out.shape(), [a.rows(), b.cols()]);
    gemm_acc(alpha, a, false, b, false, beta, &mut out.data);
}

/// `out = alpha * op(a) op(b) + beta * out`, `out` dense row-major.
pub(crate) fn gemm_acc<T: Real>(
    alpha: T,
    a: &NumArray<T>,
    trans_a: bool,
    b: &NumArray<T>,
    trans_b: bool,
    beta: T,
    out: &mut [T],
) {
    let (m, k) = dims2(a, trans_a);
    let (_, n) = dims2(b, trans_b);
    T::gemm(
        m,
        k,
        n,
        alpha,
        a.data(),
        strides(a, trans_a),
        b.data(),
        strides(b, trans_b),
        beta,
        out,
        (n as isize, 1),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive_loops() {
        let a = NumArray::<f64>::from_fn(&[3, 4], |i| (i as f64 * 0.37).sin());
        let b = NumArray::<f64>::from_fn(&[4, 2], |i| (i as f64 * 1.3).cos());
        let c = a.matmul(&b, false, false).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let want: f64 = (0..4).map(|k| a.get2(i, k) * b.get2(k, j)).sum();
                assert!((c.get2(i, j) - want).abs() < 1e-14);
            }
        }
        let ct = b.matmul(&a, true, true).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((ct.get2(i, j) - c.get2(j, i)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(NumArray::<f32>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        let a = NumArray::<f32>::zeros(&[2, 3]);
        assert!(a.matmul(&a, false, false).is_err());
    }
}
