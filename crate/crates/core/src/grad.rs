//! Backward passes for every forward strategy, plus finite-difference
//! verification.
//!
//! The standard-convolution backward is the adjoint of the two forward
//! steps: d_W = dZ * C^T summed over the batch, d_X = col2im(W^T * dZ).
//! The depthwise backward is its per-channel restriction, and the
//! diagonalwise backward additionally filters the weight gradient through
//! the constant mask A, so off-diagonal gradient entries come out as exact
//! zeros and the expanded weights can never drift off the diagonal during
//! training. Weight gradients are summed over the batch.
//!
//! Gradient checks run in double precision only; single-precision central
//! differences drown in cancellation noise long before the tolerances here.

use crate::convops::{
    masked_weights, ConnectivityMask, ConvSpec, DepthwiseWeights, DiagMode, DiagonalPlan,
};
use crate::error::{Error, Result};
use crate::lowering::{col2im_accumulate, gemm_with, im2col_channels, ColBuffer, GemmKind};
use crate::tensor::{Matrix, Scalar, Tensor4};

/// Which depthwise backward implementation to run. Both produce the same
/// values; `Direct` never materializes a column matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthwiseKind {
    Cbyc,
    Direct,
}

/// Weight gradients in the same container shape as the strategy's weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightGrads<T> {
    /// Dense N x (M*K*K) matrix (standard and masked convolutions).
    Dense(Matrix<T>),
    /// Per-channel filter vectors (depthwise strategies, compact plans).
    Depthwise(DepthwiseWeights<T>),
    /// Per-group expanded matrices in the shape of each W_g (literal plans);
    /// entries where the group mask is zero are exact +0.0.
    DiagLiteral(Vec<Matrix<T>>),
}

/// Input and weight gradients of one backward call. `d_weights` is `None`
/// when the call was made with `skip_weight_grad`.
#[derive(Debug, Clone)]
pub struct ConvGradients<T> {
    pub d_input: Tensor4<T>,
    pub d_weights: Option<WeightGrads<T>>,
}

fn check_d_output<T: Scalar>(
    x: &Tensor4<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
) -> Result<usize> {
    let f_out = spec.out_size(x.height())?;
    let want = (x.batch(), spec.out_channels, f_out, f_out);
    if d_output.shape() != want {
        return Err(Error::ShapeMismatch(format!(
            "d_output is {:?}, forward output is {:?}",
            d_output.shape(),
            want
        )));
    }
    Ok(f_out)
}

/// Batch slice of a (N, C, F, F) tensor viewed as a C x F*F matrix.
fn batch_as_matrix<T: Scalar>(t: &Tensor4<T>, b: usize) -> Matrix<T> {
    let (_, c, h, w) = t.shape();
    let start = t.offset(b, 0, 0, 0);
    Matrix::from_vec(c, h * w, t.data()[start..start + c * h * w].to_vec())
        .expect("batch slice is dense")
}

fn add_assign<T: Scalar>(dst: &mut Matrix<T>, src: &Matrix<T>) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// d_X part of the standard-convolution backward; `x` contributes only its
/// shape (the output is linear in the input).
pub fn input_grad_standard<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    check_d_output(x, spec, d_output)?;
    let w_t = w.transpose();
    let mut d_input = Tensor4::zeros(x.batch(), x.channels(), x.height(), x.width());
    for b in 0..x.batch() {
        let dz = batch_as_matrix(d_output, b);
        let d_cols = gemm_with(&w_t, &dz, gemm)?;
        let back = col2im_accumulate(&ColBuffer::from_matrix(d_cols, x.height(), spec)?, spec)?;
        let start = d_input.offset(b, 0, 0, 0);
        let len = back.len();
        d_input.data_mut()[start..start + len].copy_from_slice(back.data());
    }
    Ok(d_input)
}

/// d_W part of the standard-convolution backward, summed over the batch.
pub fn weight_grad_standard<T: Scalar>(
    x: &Tensor4<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<Matrix<T>> {
    check_d_output(x, spec, d_output)?;
    let k = spec.kernel;
    let mut d_w = Matrix::zeros(spec.out_channels, spec.in_channels * k * k);
    for b in 0..x.batch() {
        let cols = im2col_channels(x, b, 0, spec)?;
        let dz = batch_as_matrix(d_output, b);
        let contrib = gemm_with(&dz, &cols.matrix().transpose(), gemm)?;
        add_assign(&mut d_w, &contrib);
    }
    Ok(d_w)
}

/// Full standard-convolution backward.
pub fn backward_standard<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<ConvGradients<T>> {
    spec.validate()?;
    if w.rows() != spec.out_channels || w.cols() != spec.in_channels * spec.kernel * spec.kernel {
        return Err(Error::ShapeMismatch(format!(
            "weight matrix is {}x{}, spec expects {}x{}",
            w.rows(),
            w.cols(),
            spec.out_channels,
            spec.in_channels * spec.kernel * spec.kernel
        )));
    }
    let d_input = input_grad_standard(x, w, spec, d_output, gemm)?;
    let d_w = weight_grad_standard(x, spec, d_output, gemm)?;
    Ok(ConvGradients {
        d_input,
        d_weights: Some(WeightGrads::Dense(d_w)),
    })
}

fn check_depthwise_grad<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
) -> Result<usize> {
    spec.validate()?;
    if !spec.is_depthwise() {
        return Err(Error::InvalidConfig(format!(
            "expected a depthwise spec, got {:?}",
            spec.connectivity
        )));
    }
    if w.channels() != spec.in_channels || w.kernel() != spec.kernel {
        return Err(Error::ShapeMismatch(format!(
            "weights hold {} filters of kernel {}, spec expects {} of {}",
            w.channels(),
            w.kernel(),
            spec.in_channels,
            spec.kernel
        )));
    }
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, spec expects {}",
            x.channels(),
            spec.in_channels
        )));
    }
    check_d_output(x, spec, d_output)
}

/// d_X of the depthwise backward, channel by channel via col2im.
pub fn input_grad_depthwise_cbyc<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    let f_out = check_depthwise_grad(x, w, spec, d_output)?;
    let kk = spec.kernel * spec.kernel;
    let chan_spec = ConvSpec::dense(1, 1, spec.kernel, spec.stride, spec.padding);
    let mut d_input = Tensor4::zeros(x.batch(), x.channels(), x.height(), x.width());
    for ch in 0..spec.in_channels {
        let w_col = Matrix::from_vec(kk, 1, w.filter(ch).to_vec())?;
        for b in 0..x.batch() {
            let start = d_output.offset(b, ch, 0, 0);
            let dz = Matrix::from_vec(
                1,
                f_out * f_out,
                d_output.data()[start..start + f_out * f_out].to_vec(),
            )?;
            let d_cols = gemm_with(&w_col, &dz, gemm)?;
            let back = col2im_accumulate(
                &ColBuffer::from_matrix(d_cols, x.height(), &chan_spec)?,
                &chan_spec,
            )?;
            let dst = d_input.offset(b, ch, 0, 0);
            d_input.data_mut()[dst..dst + back.len()].copy_from_slice(back.data());
        }
    }
    Ok(d_input)
}

/// d_w of the depthwise backward, channel by channel: dw_i = dz_i * C_i^T.
pub fn weight_grad_depthwise_cbyc<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<DepthwiseWeights<T>> {
    let f_out = check_depthwise_grad(x, w, spec, d_output)?;
    let chan_spec = ConvSpec::dense(1, 1, spec.kernel, spec.stride, spec.padding);
    let mut d_w = DepthwiseWeights::zeros(spec.in_channels, spec.kernel);
    for ch in 0..spec.in_channels {
        for b in 0..x.batch() {
            let cols = im2col_channels(x, b, ch, &chan_spec)?;
            let start = d_output.offset(b, ch, 0, 0);
            let dz = Matrix::from_vec(
                1,
                f_out * f_out,
                d_output.data()[start..start + f_out * f_out].to_vec(),
            )?;
            let contrib = gemm_with(&dz, &cols.matrix().transpose(), gemm)?;
            for (dv, &cv) in d_w.filter_mut(ch).iter_mut().zip(contrib.row(0)) {
                *dv += cv;
            }
        }
    }
    Ok(d_w)
}

/// d_X of the depthwise backward by direct scatter, no column matrix.
pub fn input_grad_depthwise_direct<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let f_out = check_depthwise_grad(x, w, spec, d_output)?;
    let (batch, m, in_h, in_w) = x.shape();
    let k = spec.kernel;
    let pad = spec.padding as isize;
    let mut d_input = Tensor4::zeros(batch, m, in_h, in_w);
    for b in 0..batch {
        for ch in 0..m {
            let filter = w.filter(ch);
            for oy in 0..f_out {
                for ox in 0..f_out {
                    let g = d_output.at(b, ch, oy, ox);
                    for kr in 0..k {
                        let iy = (oy * spec.stride + kr) as isize - pad;
                        if iy < 0 || iy as usize >= in_h {
                            continue;
                        }
                        for kc in 0..k {
                            let ix = (ox * spec.stride + kc) as isize - pad;
                            if ix < 0 || ix as usize >= in_w {
                                continue;
                            }
                            *d_input.at_mut(b, ch, iy as usize, ix as usize) +=
                                filter[kr * k + kc] * g;
                        }
                    }
                }
            }
        }
    }
    Ok(d_input)
}

/// d_w of the depthwise backward by direct gather, no column matrix.
pub fn weight_grad_depthwise_direct<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
) -> Result<DepthwiseWeights<T>> {
    let f_out = check_depthwise_grad(x, w, spec, d_output)?;
    let (batch, m, in_h, in_w) = x.shape();
    let k = spec.kernel;
    let pad = spec.padding as isize;
    let mut d_w = DepthwiseWeights::zeros(m, spec.kernel);
    for b in 0..batch {
        for ch in 0..m {
            let dwf = d_w.filter_mut(ch);
            for oy in 0..f_out {
                for ox in 0..f_out {
                    let g = d_output.at(b, ch, oy, ox);
                    for kr in 0..k {
                        let iy = (oy * spec.stride + kr) as isize - pad;
                        for kc in 0..k {
                            let ix = (ox * spec.stride + kc) as isize - pad;
                            let v = if iy >= 0
                                && ix >= 0
                                && (iy as usize) < in_h
                                && (ix as usize) < in_w
                            {
                                x.at(b, ch, iy as usize, ix as usize)
                            } else {
                                T::zero()
                            };
                            dwf[kr * k + kc] += v * g;
                        }
                    }
                }
            }
        }
    }
    Ok(d_w)
}

/// Depthwise backward under either implementation. `skip_weight_grad`
/// reproduces the measurement mode where only the input gradient is wanted.
pub fn backward_depthwise<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    kind: DepthwiseKind,
    skip_weight_grad: bool,
) -> Result<ConvGradients<T>> {
    let d_input = match kind {
        DepthwiseKind::Cbyc => input_grad_depthwise_cbyc(x, w, spec, d_output, GemmKind::Naive)?,
        DepthwiseKind::Direct => input_grad_depthwise_direct(x, w, spec, d_output)?,
    };
    let d_weights = if skip_weight_grad {
        None
    } else {
        let d_w = match kind {
            DepthwiseKind::Cbyc => {
                weight_grad_depthwise_cbyc(x, w, spec, d_output, GemmKind::Naive)?
            }
            DepthwiseKind::Direct => weight_grad_depthwise_direct(x, w, spec, d_output)?,
        };
        Some(WeightGrads::Depthwise(d_w))
    };
    Ok(ConvGradients { d_input, d_weights })
}

/// Zero out entries of `g` wherever `mask` is zero; survivors pass through
/// untouched, filtered entries become exact +0.0.
fn filter_by_mask<T: Scalar>(g: &mut Matrix<T>, mask: &Matrix<T>) {
    for (v, &m) in g.data_mut().iter_mut().zip(mask.data()) {
        if m == T::zero() {
            *v = T::zero();
        }
    }
}

/// d_X of the diagonalwise backward.
pub fn input_grad_diag<T: Scalar>(
    x: &Tensor4<T>,
    plan: &DiagonalPlan<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    plan.check_spec(spec)?;
    let f_out = check_d_output(x, spec, d_output)?;
    let kk = spec.kernel * spec.kernel;
    let mut d_input = Tensor4::zeros(x.batch(), x.channels(), x.height(), x.width());

    for group in plan.groups() {
        let size = group.size();
        let gspec = ConvSpec::dense(size, size, spec.kernel, spec.stride, spec.padding);
        for b in 0..x.batch() {
            let start = d_output.offset(b, group.lo(), 0, 0);
            let dz = Matrix::from_vec(
                size,
                f_out * f_out,
                d_output.data()[start..start + size * f_out * f_out].to_vec(),
            )?;
            let d_cols = match plan.mode() {
                DiagMode::Literal => {
                    // d_C = W_hat^T * dZ with the mask re-applied first.
                    let mut w_hat = group.weight().expect("literal plan stores weights").clone();
                    filter_by_mask(&mut w_hat, group.mask().expect("literal plan stores masks"));
                    gemm_with(&w_hat.transpose(), &dz, gemm)?
                }
                DiagMode::Compact => {
                    // Only the diagonal blocks of W_hat are nonzero, so row
                    // i*KK+t of d_C is w_i[t] * dz_i — fill it directly.
                    let mut d_cols = Matrix::zeros(size * kk, f_out * f_out);
                    for i in 0..size {
                        let filter = plan.filters().filter(group.lo() + i);
                        for (t, &wv) in filter.iter().enumerate() {
                            let dst = d_cols.row_mut(i * kk + t);
                            for (dv, &gv) in dst.iter_mut().zip(dz.row(i)) {
                                *dv = wv * gv;
                            }
                        }
                    }
                    d_cols
                }
            };
            let back =
                col2im_accumulate(&ColBuffer::from_matrix(d_cols, x.height(), &gspec)?, &gspec)?;
            for ch in 0..size {
                let dst = d_input.offset(b, group.lo() + ch, 0, 0);
                let src = back.offset(0, ch, 0, 0);
                let len = x.height() * x.width();
                d_input.data_mut()[dst..dst + len].copy_from_slice(&back.data()[src..src + len]);
            }
        }
    }
    Ok(d_input)
}

/// Weight gradients of the diagonalwise backward.
///
/// Literal mode computes the full per-group gradient dZ/dW_hat and filters
/// it through the group mask, so off-diagonal entries are exact zeros.
/// Compact mode computes only the diagonal-block entries and returns them
/// as per-channel vectors.
pub fn weight_grad_diag<T: Scalar>(
    x: &Tensor4<T>,
    plan: &DiagonalPlan<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<WeightGrads<T>> {
    plan.check_spec(spec)?;
    let f_out = check_d_output(x, spec, d_output)?;
    let kk = spec.kernel * spec.kernel;

    match plan.mode() {
        DiagMode::Literal => {
            let mut per_group = Vec::with_capacity(plan.groups().len());
            for group in plan.groups() {
                let size = group.size();
                let gspec = ConvSpec::dense(size, size, spec.kernel, spec.stride, spec.padding);
                let mut g_w = Matrix::zeros(size, size * kk);
                for b in 0..x.batch() {
                    let cols = im2col_channels(x, b, group.lo(), &gspec)?;
                    let start = d_output.offset(b, group.lo(), 0, 0);
                    let dz = Matrix::from_vec(
                        size,
                        f_out * f_out,
                        d_output.data()[start..start + size * f_out * f_out].to_vec(),
                    )?;
                    let contrib = gemm_with(&dz, &cols.matrix().transpose(), gemm)?;
                    add_assign(&mut g_w, &contrib);
                }
                filter_by_mask(&mut g_w, group.mask().expect("literal plan stores masks"));
                per_group.push(g_w);
            }
            Ok(WeightGrads::DiagLiteral(per_group))
        }
        DiagMode::Compact => {
            let mut d_w = DepthwiseWeights::zeros(spec.in_channels, spec.kernel);
            for group in plan.groups() {
                let size = group.size();
                let gspec = ConvSpec::dense(size, size, spec.kernel, spec.stride, spec.padding);
                for b in 0..x.batch() {
                    let cols = im2col_channels(x, b, group.lo(), &gspec)?;
                    for i in 0..size {
                        let ch = group.lo() + i;
                        let start = d_output.offset(b, ch, 0, 0);
                        let dz = &d_output.data()[start..start + f_out * f_out];
                        let dwf = d_w.filter_mut(ch);
                        for t in 0..kk {
                            let crow = cols.matrix().row(i * kk + t);
                            let mut acc = T::zero();
                            for (&gv, &cv) in dz.iter().zip(crow) {
                                acc += gv * cv;
                            }
                            dwf[t] += acc;
                        }
                    }
                }
            }
            Ok(WeightGrads::Depthwise(d_w))
        }
    }
}

/// Full diagonalwise backward.
pub fn backward_diag<T: Scalar>(
    x: &Tensor4<T>,
    plan: &DiagonalPlan<T>,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<ConvGradients<T>> {
    let d_input = input_grad_diag(x, plan, spec, d_output, gemm)?;
    let d_weights = weight_grad_diag(x, plan, spec, d_output, gemm)?;
    Ok(ConvGradients {
        d_input,
        d_weights: Some(d_weights),
    })
}

/// Masked-convolution backward: the dense backward with the gradient (and
/// the weights feeding d_X) filtered through the connectivity mask.
pub fn backward_masked<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    mask: &ConnectivityMask,
    spec: &ConvSpec,
    d_output: &Tensor4<T>,
    gemm: GemmKind,
) -> Result<ConvGradients<T>> {
    if mask.rows() != w.rows() || mask.cols() != w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, weights are {}x{}",
            mask.rows(),
            mask.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let w_hat = masked_weights(w, mask);
    let d_input = input_grad_standard(x, &w_hat, spec, d_output, gemm)?;
    let mut d_w = weight_grad_standard(x, spec, d_output, gemm)?;
    for r in 0..d_w.rows() {
        for c in 0..d_w.cols() {
            if !mask.active(r, c) {
                *d_w.at_mut(r, c) = T::zero();
            }
        }
    }
    Ok(ConvGradients {
        d_input,
        d_weights: Some(WeightGrads::Dense(d_w)),
    })
}

/// Central-difference check of analytic gradients.
///
/// `forward` maps a parameter vector to the flattened output; the scalar
/// loss is the contraction of that output with `d_output`. For each
/// coordinate the numeric derivative (f(p+h) - f(p-h)) / 2h is contracted
/// with `d_output` and compared to `analytic`; the returned value is the
/// worst relative error with denominator max(|analytic|, |numeric|, 1e-12).
pub fn fd_check<F>(
    mut forward: F,
    params: &[f64],
    analytic: &[f64],
    d_output: &[f64],
    step: f64,
) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    assert_eq!(
        params.len(),
        analytic.len(),
        "one analytic gradient per parameter"
    );
    assert!(step > 0.0);
    let mut theta = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        let plus = forward(&theta);
        theta[i] = orig - step;
        let minus = forward(&theta);
        theta[i] = orig;
        debug_assert_eq!(plus.len(), d_output.len());
        let numeric: f64 = plus
            .iter()
            .zip(&minus)
            .zip(d_output)
            .map(|((p, m), g)| (p - m) * g)
            .sum::<f64>()
            / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-12);
        let err = (analytic[i] - numeric).abs() / denom;
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convops::{
        conv_depthwise_cbyc, conv_depthwise_diag, conv_masked, conv_standard, plan_diagonalwise,
        Grouping,
    };
    use crate::tensor::{fill_random, max_rel_error, max_rel_error_slice};

    const STEP: f64 = 1e-4;

    #[test]
    fn fd_check_on_linear_and_zero_functions() {
        // f(theta) = c . theta, d_output = [1]; central differences are exact.
        let c = [2.5, -1.0, 0.75];
        let forward = |p: &[f64]| vec![p.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()];
        let err = fd_check(forward, &[0.3, -0.2, 0.9], &c, &[1.0], STEP);
        assert!(err <= 1e-10, "linear fd error {err}");

        let zero = |_: &[f64]| vec![0.0, 0.0];
        let err = fd_check(zero, &[1.0, 2.0], &[0.0, 0.0], &[1.0, 1.0], STEP);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn standard_zero_d_output_gives_zero_grads() {
        let spec = ConvSpec::dense(2, 3, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((2, 2, 4, 4), 50);
        let w: Matrix<f64> = Matrix::random(3, 18, 51);
        let dz: Tensor4<f64> = Tensor4::zeros(2, 3, 4, 4);
        let g = backward_standard(&x, &w, &spec, &dz, GemmKind::Naive).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        match g.d_weights.unwrap() {
            WeightGrads::Dense(m) => assert!(m.data().iter().all(|&v| v == 0.0)),
            other => panic!("unexpected container {other:?}"),
        }
    }

    #[test]
    fn standard_scalar_chain_rule() {
        // K=1, M=N=1, w=[c]: d_input = c * d_output, d_w = sum(x * d_output).
        let spec = ConvSpec::dense(1, 1, 1, 1, 0);
        let x: Tensor4<f64> = fill_random((2, 1, 3, 3), 52);
        let w = Matrix::from_vec(1, 1, vec![1.7]).unwrap();
        let dz: Tensor4<f64> = fill_random((2, 1, 3, 3), 53);
        let g = backward_standard(&x, &w, &spec, &dz, GemmKind::Naive).unwrap();
        for (di, dzv) in g.d_input.data().iter().zip(dz.data()) {
            assert!((di - 1.7 * dzv).abs() < 1e-15);
        }
        let want: f64 = x.data().iter().zip(dz.data()).map(|(a, b)| a * b).sum();
        match g.d_weights.unwrap() {
            WeightGrads::Dense(m) => assert!((m.at(0, 0) - want).abs() < 1e-12),
            other => panic!("unexpected container {other:?}"),
        }
    }

    #[test]
    fn standard_weight_grad_matches_finite_differences() {
        let spec = ConvSpec::dense(2, 3, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 2, 5, 5), 37);
        let w: Matrix<f64> = Matrix::random(3, 18, 137);
        let dz: Tensor4<f64> = fill_random((1, 3, 5, 5), 237);

        let g = backward_standard(&x, &w, &spec, &dz, GemmKind::Naive).unwrap();
        let analytic = match g.d_weights.unwrap() {
            WeightGrads::Dense(m) => m,
            other => panic!("unexpected container {other:?}"),
        };

        let forward = |p: &[f64]| {
            let wp = Matrix::from_vec(3, 18, p.to_vec()).unwrap();
            conv_standard(&x, &wp, &spec, GemmKind::Naive)
                .unwrap()
                .data()
                .to_vec()
        };
        let err = fd_check(forward, w.data(), analytic.data(), dz.data(), STEP);
        assert!(err <= 1e-6, "weight fd error {err}");

        // Input gradient through the same checker.
        let forward_x = |p: &[f64]| {
            let xp = Tensor4::from_vec(1, 2, 5, 5, p.to_vec()).unwrap();
            conv_standard(&xp, &w, &spec, GemmKind::Naive)
                .unwrap()
                .data()
                .to_vec()
        };
        let gx = backward_standard(&x, &w, &spec, &dz, GemmKind::Naive).unwrap();
        let err = fd_check(forward_x, x.data(), gx.d_input.data(), dz.data(), STEP);
        assert!(err <= 1e-6, "input fd error {err}");
    }

    #[test]
    fn depthwise_delta_kernel_passes_gradient_through() {
        let spec = ConvSpec::depthwise(3, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 3, 4, 4), 54);
        let mut w = DepthwiseWeights::zeros(3, 3);
        for ch in 0..3 {
            w.filter_mut(ch)[4] = 1.0;
        }
        let dz: Tensor4<f64> = fill_random((1, 3, 4, 4), 55);
        for kind in [DepthwiseKind::Cbyc, DepthwiseKind::Direct] {
            let g = backward_depthwise(&x, &w, &spec, &dz, kind, true).unwrap();
            assert!(g.d_weights.is_none());
            assert!(max_rel_error(&g.d_input, &dz).unwrap() == 0.0);
        }
    }

    #[test]
    fn depthwise_constant_input_counts_positions() {
        // x = 1 everywhere, no padding: every tap sees every window once.
        let spec = ConvSpec::depthwise(2, 3, 1, 0);
        let x = Tensor4::from_vec(1, 2, 5, 5, vec![1.0f64; 50]).unwrap();
        let w = DepthwiseWeights::random(2, 3, 56);
        let dz = Tensor4::from_vec(1, 2, 3, 3, vec![1.0f64; 18]).unwrap();
        for kind in [DepthwiseKind::Cbyc, DepthwiseKind::Direct] {
            let g = backward_depthwise(&x, &w, &spec, &dz, kind, false).unwrap();
            match g.d_weights.unwrap() {
                WeightGrads::Depthwise(dw) => {
                    assert!(dw.data().iter().all(|&v| (v - 9.0).abs() < 1e-12));
                }
                other => panic!("unexpected container {other:?}"),
            }
        }
    }

    #[test]
    fn depthwise_grad_matches_finite_differences() {
        let spec = ConvSpec::depthwise(4, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 4, 6, 6), 41);
        let w = DepthwiseWeights::random(4, 3, 141);
        let dz: Tensor4<f64> = fill_random((1, 4, 6, 6), 241);

        let g = backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Cbyc, false).unwrap();
        let analytic = match g.d_weights.unwrap() {
            WeightGrads::Depthwise(dw) => dw,
            other => panic!("unexpected container {other:?}"),
        };

        let forward = |p: &[f64]| {
            let mut wp = DepthwiseWeights::zeros(4, 3);
            wp.data_mut().copy_from_slice(p);
            conv_depthwise_cbyc(&x, &wp, &spec, GemmKind::Naive)
                .unwrap()
                .data()
                .to_vec()
        };
        let err = fd_check(forward, w.data(), analytic.data(), dz.data(), STEP);
        assert!(err <= 1e-6, "depthwise fd error {err}");
    }

    #[test]
    fn depthwise_cbyc_and_direct_agree() {
        let spec = ConvSpec::depthwise(4, 3, 2, 1);
        let x: Tensor4<f64> = fill_random((2, 4, 7, 7), 57);
        let w = DepthwiseWeights::random(4, 3, 58);
        let dz: Tensor4<f64> = fill_random((2, 4, 4, 4), 59);

        let a = backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Cbyc, false).unwrap();
        let b = backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Direct, false).unwrap();
        assert!(max_rel_error(&a.d_input, &b.d_input).unwrap() <= 1e-12);
        match (a.d_weights.unwrap(), b.d_weights.unwrap()) {
            (WeightGrads::Depthwise(da), WeightGrads::Depthwise(db)) => {
                assert!(max_rel_error_slice(da.data(), db.data()) <= 1e-12);
            }
            _ => panic!("unexpected containers"),
        }
    }

    #[test]
    fn diag_smallest_instance_masks_off_diagonal() {
        let w = DepthwiseWeights::from_filters(vec![vec![2.0f64], vec![-3.0]], 1).unwrap();
        let spec = ConvSpec::depthwise(2, 1, 1, 0);
        let plan = plan_diagonalwise(&w, &spec, Grouping::None, DiagMode::Literal).unwrap();
        let x: Tensor4<f64> = fill_random((1, 2, 3, 3), 60);
        let dz: Tensor4<f64> = fill_random((1, 2, 3, 3), 61);
        let g = backward_diag(&x, &plan, &spec, &dz, GemmKind::Naive).unwrap();
        match g.d_weights.unwrap() {
            WeightGrads::DiagLiteral(gs) => {
                let m = &gs[0];
                assert_eq!(m.at(0, 1).to_bits(), 0.0f64.to_bits());
                assert_eq!(m.at(1, 0).to_bits(), 0.0f64.to_bits());
                assert_ne!(m.at(0, 0), 0.0);
                assert_ne!(m.at(1, 1), 0.0);
            }
            other => panic!("unexpected container {other:?}"),
        }
    }

    #[test]
    fn diag_per_channel_groups_match_depthwise_backward() {
        let spec = ConvSpec::depthwise(4, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 4, 5, 5), 62);
        let w = DepthwiseWeights::random(4, 3, 63);
        let dz: Tensor4<f64> = fill_random((1, 4, 5, 5), 64);

        let plan = plan_diagonalwise(&w, &spec, Grouping::ByCount(4), DiagMode::Compact).unwrap();
        let g = backward_diag(&x, &plan, &spec, &dz, GemmKind::Naive).unwrap();
        let want = backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Cbyc, false).unwrap();
        assert!(max_rel_error(&g.d_input, &want.d_input).unwrap() == 0.0);
        match (g.d_weights.unwrap(), want.d_weights.unwrap()) {
            (WeightGrads::Depthwise(a), WeightGrads::Depthwise(b)) => {
                assert_eq!(a, b);
            }
            _ => panic!("unexpected containers"),
        }
    }

    #[test]
    fn diag_literal_grad_matches_masked_finite_differences() {
        let m = 8;
        let spec = ConvSpec::depthwise(m, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, m, 7, 7), 43);
        let w = DepthwiseWeights::random(m, 3, 143);
        let dz: Tensor4<f64> = fill_random((1, m, 7, 7), 243);
        let plan = plan_diagonalwise(&w, &spec, Grouping::BySize(4), DiagMode::Literal).unwrap();

        let g = weight_grad_diag(&x, &plan, &spec, &dz, GemmKind::Naive).unwrap();
        let gs = match g {
            WeightGrads::DiagLiteral(gs) => gs,
            other => panic!("unexpected container {other:?}"),
        };

        // Perturb only the diagonal taps (the mask keeps everything else at
        // zero); compare against the per-channel entries of the literal grad.
        let mut analytic = Vec::with_capacity(m * 9);
        for ch in 0..m {
            let (gi, i) = (ch / 4, ch % 4);
            for t in 0..9 {
                analytic.push(gs[gi].at(i, i * 9 + t));
            }
        }
        let forward = |p: &[f64]| {
            let mut wp = DepthwiseWeights::zeros(m, 3);
            wp.data_mut().copy_from_slice(p);
            let plan_p =
                plan_diagonalwise(&wp, &spec, Grouping::BySize(4), DiagMode::Literal).unwrap();
            conv_depthwise_diag(&x, &plan_p, &spec, GemmKind::Naive)
                .unwrap()
                .data()
                .to_vec()
        };
        let err = fd_check(forward, w.data(), &analytic, dz.data(), STEP);
        assert!(err <= 1e-6, "diag fd error {err}");

        // Every off-diagonal entry is exact +0.0.
        for (gi, g_w) in gs.iter().enumerate() {
            let mask = plan.groups()[gi].mask().unwrap();
            for r in 0..g_w.rows() {
                for c in 0..g_w.cols() {
                    if mask.at(r, c) == 0.0 {
                        assert_eq!(g_w.at(r, c).to_bits(), 0.0f64.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn masked_backward_all_ones_equals_standard() {
        let spec = ConvSpec::masked(2, 3, 3, 1, 1);
        let dense = ConvSpec::dense(2, 3, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 2, 5, 5), 65);
        let w: Matrix<f64> = Matrix::random(3, 18, 66);
        let dz: Tensor4<f64> = fill_random((1, 3, 5, 5), 67);
        let mask = ConnectivityMask::ones(3, 18);

        let a = backward_masked(&x, &w, &mask, &spec, &dz, GemmKind::Naive).unwrap();
        let b = backward_standard(&x, &w, &dense, &dz, GemmKind::Naive).unwrap();
        assert_eq!(a.d_input, b.d_input);
        match (a.d_weights.unwrap(), b.d_weights.unwrap()) {
            (WeightGrads::Dense(ma), WeightGrads::Dense(mb)) => assert_eq!(ma, mb),
            _ => panic!("unexpected containers"),
        }
    }

    #[test]
    fn masked_backward_all_zeros_kills_everything() {
        let spec = ConvSpec::masked(2, 2, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 2, 4, 4), 68);
        let w: Matrix<f64> = Matrix::random(2, 18, 69);
        let dz: Tensor4<f64> = fill_random((1, 2, 4, 4), 70);
        let mask = ConnectivityMask::zeros(2, 18);
        let g = backward_masked(&x, &w, &mask, &spec, &dz, GemmKind::Naive).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        match g.d_weights.unwrap() {
            WeightGrads::Dense(m) => assert!(m.data().iter().all(|&v| v == 0.0)),
            other => panic!("unexpected container {other:?}"),
        }
    }

    #[test]
    fn masked_backward_fd_on_unmasked_coordinates() {
        let spec = ConvSpec::masked(3, 3, 3, 1, 1);
        let x: Tensor4<f64> = fill_random((1, 3, 5, 5), 47);
        let w: Matrix<f64> = Matrix::random(3, 27, 147);
        let dz: Tensor4<f64> = fill_random((1, 3, 5, 5), 247);
        let mask = ConnectivityMask::random(3, 27, 0.5, 347);

        let g = backward_masked(&x, &w, &mask, &spec, &dz, GemmKind::Naive).unwrap();
        let d_w = match g.d_weights.unwrap() {
            WeightGrads::Dense(m) => m,
            other => panic!("unexpected container {other:?}"),
        };

        // Masked coordinates are exactly zero.
        for r in 0..3 {
            for c in 0..27 {
                if !mask.active(r, c) {
                    assert_eq!(d_w.at(r, c).to_bits(), 0.0f64.to_bits());
                }
            }
        }

        let forward = |p: &[f64]| {
            let wp = Matrix::from_vec(3, 27, p.to_vec()).unwrap();
            conv_masked(&x, &wp, &mask, &spec, GemmKind::Naive)
                .unwrap()
                .data()
                .to_vec()
        };
        let err = fd_check(forward, w.data(), d_w.data(), dz.data(), STEP);
        assert!(err <= 1e-6, "masked fd error {err}");
    }

    #[test]
    fn adjoint_identity_per_strategy() {
        // <d_input, v> == <d_output, forward(v)> since forward is linear in x.
        let m = 3;
        let spec = ConvSpec::depthwise(m, 3, 2, 1);
        let x: Tensor4<f64> = fill_random((1, m, 6, 6), 71);
        let w = DepthwiseWeights::random(m, 3, 72);
        let dz: Tensor4<f64> = fill_random((1, m, 3, 3), 73);
        let v: Tensor4<f64> = fill_random((1, m, 6, 6), 74);

        let pairing =
            |g: &Tensor4<f64>| -> f64 { g.data().iter().zip(v.data()).map(|(a, b)| a * b).sum() };

        let fwd_v_cbyc = conv_depthwise_cbyc(&v, &w, &spec, GemmKind::Naive).unwrap();
        let rhs: f64 = dz
            .data()
            .iter()
            .zip(fwd_v_cbyc.data())
            .map(|(a, b)| a * b)
            .sum();

        for kind in [DepthwiseKind::Cbyc, DepthwiseKind::Direct] {
            let g = backward_depthwise(&x, &w, &spec, &dz, kind, true).unwrap();
            assert!((pairing(&g.d_input) - rhs).abs() <= 1e-10);
        }
        for mode in [DiagMode::Literal, DiagMode::Compact] {
            let plan = plan_diagonalwise(&w, &spec, Grouping::None, mode).unwrap();
            let di = input_grad_diag(&x, &plan, &spec, &dz, GemmKind::Naive).unwrap();
            assert!((pairing(&di) - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn sgd_steps_keep_off_diagonal_bitwise_zero() {
        let m = 4;
        let spec = ConvSpec::depthwise(m, 3, 1, 1);
        let w = DepthwiseWeights::random(m, 3, 75);
        let mut plan =
            plan_diagonalwise(&w, &spec, Grouping::BySize(2), DiagMode::Literal).unwrap();
        let x: Tensor4<f64> = fill_random((1, m, 5, 5), 76);
        let dz: Tensor4<f64> = fill_random((1, m, 5, 5), 77);

        let lr = 0.01;
        for _ in 0..10 {
            let _ = conv_depthwise_diag(&x, &plan, &spec, GemmKind::Naive).unwrap();
            let grads = match weight_grad_diag(&x, &plan, &spec, &dz, GemmKind::Naive).unwrap() {
                WeightGrads::DiagLiteral(gs) => gs,
                other => panic!("unexpected container {other:?}"),
            };
            for (group, g_w) in plan.groups_mut().iter_mut().zip(&grads) {
                let w_g = group.weight_mut().unwrap();
                for (wv, &gv) in w_g.data_mut().iter_mut().zip(g_w.data()) {
                    *wv -= lr * gv;
                }
            }
        }
        for group in plan.groups() {
            let w_g = group.weight().unwrap();
            let mask = group.mask().unwrap();
            for (wv, &mv) in w_g.data().iter().zip(mask.data()) {
                if mv == 0.0 {
                    assert_eq!(wv.to_bits(), 0.0f64.to_bits());
                }
            }
        }
    }
}
