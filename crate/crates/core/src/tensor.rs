//! Dense 4-D tensors and row-major matrices shared by every strategy.
//!
//! Layout is fixed: `Tensor4` stores (batch, channel, height, width) row-major,
//! `Matrix` stores (row, col) row-major. There are no strided views; kernels
//! index flat buffers directly.

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type usable by every kernel.
///
/// Implemented for `f32` (benchmark runs) and `f64` (gradient checks and
/// oracle comparisons).
pub trait Scalar:
    Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Element precision selected at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn elem_bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Single => write!(f, "single"),
            Precision::Double => write!(f, "double"),
        }
    }
}

/// Deterministic 64-bit generator (splitmix64).
///
/// The exact algorithm is part of the fixture contract: the same seed must
/// reproduce the same tensors on every platform and in reimplementations in
/// other languages, so we do not use the platform RNG. Reference constants
/// from Vigna's splitmix64.c; `next_u64` with state 0 yields
/// 0xE220A8397B1DCDAF.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform value in [-1, 1): top 53 bits scaled to [0,1), then affinely mapped.
    pub fn next_unit(&mut self) -> f64 {
        let u = self.next_u64() >> 11;
        2.0 * (u as f64 / (1u64 << 53) as f64) - 1.0
    }

    /// Bounded integer in [lo, hi] via modulo (fixture use only; bias is irrelevant here).
    pub fn next_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.next_u64() % (hi - lo + 1)
    }
}

/// Dense 4-D array in (batch, channel, height, width) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match shape ({n},{c},{h},{w})",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of (n, c, h, w): ((n*C + c)*H + h)*W + w.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Tensor4::offset`].
    pub fn unflatten(&self, flat: usize) -> (usize, usize, usize, usize) {
        let w = flat % self.w;
        let rest = flat / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        let c = rest % self.c;
        (rest / self.c, c, h, w)
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        let i = self.offset(n, c, h, w);
        &mut self.data[i]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Copy of the channel range [c0, c1) of one batch item, as a 1-batch tensor.
    pub fn slice_channels(&self, n: usize, c0: usize, c1: usize) -> Tensor4<T> {
        debug_assert!(n < self.n && c0 <= c1 && c1 <= self.c);
        let start = self.offset(n, c0, 0, 0);
        let end = self.offset(n, c1 - 1, self.h - 1, self.w - 1) + 1;
        Tensor4 {
            n: 1,
            c: c1 - c0,
            h: self.h,
            w: self.w,
            data: self.data[start..end].to_vec(),
        }
    }

    /// Split the batch dimension into `parts` contiguous chunks (last chunk may be short).
    pub fn split_batch(&self, parts: usize) -> Vec<Tensor4<T>> {
        let parts = parts.max(1).min(self.n.max(1));
        let per = self.n.div_ceil(parts);
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.n {
            let stop = (start + per).min(self.n);
            let lo = self.offset(start, 0, 0, 0);
            let hi = lo + (stop - start) * self.c * self.h * self.w;
            out.push(Tensor4 {
                n: stop - start,
                c: self.c,
                h: self.h,
                w: self.w,
                data: self.data[lo..hi].to_vec(),
            });
            start = stop;
        }
        out
    }
}

/// Deterministic tensor with elements uniform in [-1, 1], for test fixtures
/// and benchmark inputs.
pub fn fill_random<T: Scalar>(shape: (usize, usize, usize, usize), seed: u64) -> Tensor4<T> {
    let (n, c, h, w) = shape;
    let mut rng = SplitMix64::new(seed);
    let data = (0..n * c * h * w)
        .map(|_| T::from_f64(rng.next_unit()))
        .collect();
    Tensor4 { n, c, h, w, data }
}

/// Elementwise closeness: |a_i - b_i| <= abs_tol + rel_tol * max(|a_i|, |b_i|).
pub fn tensor_equal_within<T: Scalar>(
    a: &Tensor4<T>,
    b: &Tensor4<T>,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<bool> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.data.iter().zip(&b.data).all(|(&x, &y)| {
        let (x, y) = (x.to_f64(), y.to_f64());
        (x - y).abs() <= abs_tol + rel_tol * x.abs().max(y.abs())
    }))
}

/// Largest relative difference, with denominator max(|a|, |b|, 1e-300).
pub fn max_rel_error<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(max_rel_error_slice(&a.data, &b.data))
}

/// Slice version of [`max_rel_error`].
pub fn max_rel_error_slice<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            let denom = x.abs().max(y.abs()).max(1e-300);
            let diff = (x - y).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / denom
            }
        })
        .fold(0.0, f64::max)
}

/// Flat row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = T::one();
        }
        m
    }

    /// Deterministic matrix with elements uniform in [-1, 1].
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let data = (0..rows * cols)
            .map(|_| T::from_f64(rng.next_unit()))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(c, r) = self.at(r, c);
            }
        }
        out
    }
}
