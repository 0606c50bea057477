//! Vector and matrix kernels: cosine similarity, temperature softmax,
//! normalization, and the backward passes the losses are built from.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// A dense vector with at least one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("vector must have positive dimension".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector must have positive dimension");
        Self {
            data: vec![T::zero(); dim],
        }
    }

    /// Unit basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = T::one();
        v
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| T::lit(x)).collect())
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<T> {
        self.data
    }

    pub fn norm(&self) -> T {
        norm(&self.data)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm().to_f64_lossless() - 1.0).abs() <= T::NORM_TOLERANCE
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err("matrix payload", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        matvec(&self.data, self.rows, self.cols, x)
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[T]) -> Vec<T> {
        matvec_t(&self.data, self.rows, self.cols, y)
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Row-major `(rows x cols) · x`.
pub fn matvec<T: Scalar>(m: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    m.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// Row-major `(rows x cols)ᵀ · y`.
pub fn matvec_t<T: Scalar>(m: &[T], rows: usize, cols: usize, y: &[T]) -> Vec<T> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    let mut out = vec![T::zero(); cols];
    for (row, &yi) in m.chunks_exact(cols).zip(y) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * yi;
        }
    }
    out
}

/// `grad += u ⊗ v` for a row-major `u.len() x v.len()` buffer.
pub fn add_outer<T: Scalar>(grad: &mut [T], u: &[T], v: &[T]) {
    debug_assert_eq!(grad.len(), u.len() * v.len());
    for (row, &ui) in grad.chunks_exact_mut(v.len()).zip(u) {
        for (g, &vj) in row.iter_mut().zip(v) {
            *g += ui * vj;
        }
    }
}

pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`.
pub fn cosine_sim<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(shape_err("cosine_sim operands", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Domain("cosine similarity of a zero-norm vector".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Cosine similarity and its partial derivatives with respect to both arguments.
pub struct CosineGrad<T> {
    pub value: T,
    pub d_a: Vec<T>,
    pub d_b: Vec<T>,
}

pub fn cosine_sim_grad<T: Scalar>(a: &[T], b: &[T]) -> Result<CosineGrad<T>> {
    let value = cosine_sim(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    let inv = T::one() / (na * nb);
    let (ca, cb) = (value / (na * na), value / (nb * nb));
    let d_a = a.iter().zip(b).map(|(&x, &y)| y * inv - x * ca).collect();
    let d_b = a.iter().zip(b).map(|(&x, &y)| x * inv - y * cb).collect();
    Ok(CosineGrad { value, d_a, d_b })
}

/// Numerically stable `softmax(scores / tau)`.
pub fn softmax_temp<T: Scalar>(scores: &[T], tau: T) -> Result<Vec<T>> {
    if !(tau > T::zero()) {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    if scores.is_empty() {
        return Err(Error::Shape("softmax over an empty score vector".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Value("softmax input contains a non-finite score".into()));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// `log Σ exp(x_i)` with max-subtraction.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

/// `log σ(z)`, stable for large |z|.
pub fn log_sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Index of the largest component; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = norm(v);
    if n == T::zero() || !n.is_finite() {
        return Err(Error::Domain("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Backward pass of `y = x / ‖x‖`: returns `dL/dx` given `y`, `‖x‖` and `dL/dy`.
pub fn normalize_backward<T: Scalar>(y: &[T], norm_x: T, d_y: &[T]) -> Vec<T> {
    let proj = dot(y, d_y);
    y.iter()
        .zip(d_y)
        .map(|(&yi, &gi)| (gi - yi * proj) / norm_x)
        .collect()
}

impl<T: Scalar> Vector<T> {
    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            data: l2_normalize(&self.data)?,
        })
    }
}
