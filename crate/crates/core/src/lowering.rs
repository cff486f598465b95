//! im2col / col2im transforms and the GEMM they feed.
//!
//! A standard convolution runs in two steps: the input patches are unrolled
//! into columns of an intermediate matrix (im2col), then one matrix product
//! with the weight matrix produces all output channels at once. Patch
//! entries are ordered channel-major, then kernel row, then kernel column,
//! so each channel's K*K taps occupy one contiguous run — the same layout
//! the diagonalwise weight expansion assumes.
//!
//! Two GEMM variants exist on purpose. The naive triple loop accumulates
//! strictly in k order and is the bit-stable path that equivalence tests
//! pin down; the cache-blocked variant is the benchmark path and may
//! reorder partial sums.

use crate::convops::ConvSpec;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar, Tensor4};

/// Default tile edge for [`gemm_blocked`].
pub const DEFAULT_GEMM_BLOCK: usize = 64;

/// Which GEMM implementation a forward/backward call should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GemmKind {
    #[default]
    Naive,
    Blocked(usize),
}

impl GemmKind {
    pub fn blocked() -> Self {
        GemmKind::Blocked(DEFAULT_GEMM_BLOCK)
    }
}

impl std::fmt::Display for GemmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GemmKind::Naive => write!(f, "naive"),
            GemmKind::Blocked(b) => write!(f, "blocked({b})"),
        }
    }
}

/// The unrolled-patch matrix of one batch item, plus the geometry that built it.
///
/// Shape is (C*K*K) x (F_out*F_out); column p holds the receptive field of
/// output position p, with out-of-bounds (padding) entries set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ColBuffer<T> {
    matrix: Matrix<T>,
    spec: ConvSpec,
    in_size: usize,
    out_size: usize,
}

impl<T: Scalar> ColBuffer<T> {
    /// Wrap an existing matrix (e.g. a gradient w.r.t. the column matrix) in
    /// im2col geometry so it can be scattered back with [`col2im_accumulate`].
    pub fn from_matrix(matrix: Matrix<T>, in_size: usize, spec: &ConvSpec) -> Result<Self> {
        let out_size = spec.out_size(in_size)?;
        let (rows, cols) = (
            spec.in_channels * spec.kernel * spec.kernel,
            out_size * out_size,
        );
        if matrix.rows() != rows || matrix.cols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "column matrix is {}x{}, geometry expects {}x{}",
                matrix.rows(),
                matrix.cols(),
                rows,
                cols
            )));
        }
        Ok(ColBuffer {
            matrix,
            spec: spec.clone(),
            in_size,
            out_size,
        })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn in_size(&self) -> usize {
        self.in_size
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }
}

/// Unroll the patches of one batch item into a column matrix.
///
/// Requires `x` to carry exactly `spec.in_channels` channels.
pub fn im2col<T: Scalar>(x: &Tensor4<T>, batch: usize, spec: &ConvSpec) -> Result<ColBuffer<T>> {
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, spec expects {}",
            x.channels(),
            spec.in_channels
        )));
    }
    im2col_channels(x, batch, 0, spec)
}

/// [`im2col`] over the channel window [c0, c0 + spec.in_channels) of `x`.
///
/// This is what grouped execution uses: the group's spec names the group
/// width and `c0` names where the group starts in the full tensor.
pub fn im2col_channels<T: Scalar>(
    x: &Tensor4<T>,
    batch: usize,
    c0: usize,
    spec: &ConvSpec,
) -> Result<ColBuffer<T>> {
    spec.validate()?;
    let (n, c, in_h, in_w) = x.shape();
    if batch >= n {
        return Err(Error::ShapeMismatch(format!(
            "batch index {batch} out of range {n}"
        )));
    }
    if c0 + spec.in_channels > c {
        return Err(Error::ShapeMismatch(format!(
            "channel window [{c0}, {}) exceeds input channels {c}",
            c0 + spec.in_channels
        )));
    }
    if in_h != in_w {
        return Err(Error::ShapeMismatch(format!(
            "expected square feature map, got {in_h}x{in_w}"
        )));
    }
    let k = spec.kernel;
    let f_out = spec.out_size(in_h)?;
    let pad = spec.padding as isize;

    let mut matrix = Matrix::zeros(spec.in_channels * k * k, f_out * f_out);
    for ch in 0..spec.in_channels {
        for kr in 0..k {
            for kc in 0..k {
                let row = matrix.row_mut((ch * k + kr) * k + kc);
                let mut p = 0;
                for oy in 0..f_out {
                    let iy = (oy * spec.stride + kr) as isize - pad;
                    for ox in 0..f_out {
                        let ix = (ox * spec.stride + kc) as isize - pad;
                        if iy >= 0 && ix >= 0 && (iy as usize) < in_h && (ix as usize) < in_w {
                            row[p] = x.at(batch, c0 + ch, iy as usize, ix as usize);
                        }
                        p += 1;
                    }
                }
            }
        }
    }
    Ok(ColBuffer {
        matrix,
        spec: spec.clone(),
        in_size: in_h,
        out_size: f_out,
    })
}

/// Scatter-add a column matrix back to its source positions (the adjoint of
/// [`im2col`]); padding entries are dropped. Returns a 1-batch tensor.
pub fn col2im_accumulate<T: Scalar>(cols: &ColBuffer<T>, spec: &ConvSpec) -> Result<Tensor4<T>> {
    if cols.spec != *spec {
        return Err(Error::ShapeMismatch(format!(
            "column buffer was built from {:?}, not {:?}",
            cols.spec, spec
        )));
    }
    let k = spec.kernel;
    let (f_in, f_out) = (cols.in_size, cols.out_size);
    let pad = spec.padding as isize;

    let mut x = Tensor4::zeros(1, spec.in_channels, f_in, f_in);
    for ch in 0..spec.in_channels {
        for kr in 0..k {
            for kc in 0..k {
                let row = cols.matrix.row((ch * k + kr) * k + kc);
                let mut p = 0;
                for oy in 0..f_out {
                    let iy = (oy * spec.stride + kr) as isize - pad;
                    for ox in 0..f_out {
                        let ix = (ox * spec.stride + kc) as isize - pad;
                        if iy >= 0 && ix >= 0 && (iy as usize) < f_in && (ix as usize) < f_in {
                            *x.at_mut(0, ch, iy as usize, ix as usize) += row[p];
                        }
                        p += 1;
                    }
                }
            }
        }
    }
    Ok(x)
}

fn check_gemm_dims<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Naive matrix product; each output element accumulates sequentially over k.
pub fn gemm<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_gemm_dims(a, b)?;
    let mut c = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            let brow = b.row(k);
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// Cache-blocked matrix product with square tiles of edge `block`.
pub fn gemm_blocked<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, block: usize) -> Result<Matrix<T>> {
    check_gemm_dims(a, b)?;
    let block = block.max(1);
    let (ar, ak, bc) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(ar, bc);
    for i0 in (0..ar).step_by(block) {
        let i1 = (i0 + block).min(ar);
        for k0 in (0..ak).step_by(block) {
            let k1 = (k0 + block).min(ak);
            for j0 in (0..bc).step_by(block) {
                let j1 = (j0 + block).min(bc);
                for i in i0..i1 {
                    let arow = a.row(i);
                    for k in k0..k1 {
                        let aik = arow[k];
                        let brow = &b.row(k)[j0..j1];
                        let crow = &mut c.row_mut(i)[j0..j1];
                        for (cv, &bv) in crow.iter_mut().zip(brow) {
                            *cv += aik * bv;
                        }
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Dispatch on [`GemmKind`].
pub fn gemm_with<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, kind: GemmKind) -> Result<Matrix<T>> {
    match kind {
        GemmKind::Naive => gemm(a, b),
        GemmKind::Blocked(block) => gemm_blocked(a, b, block),
    }
}
