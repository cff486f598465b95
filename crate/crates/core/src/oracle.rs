//! Brute-force reference convolutions.
//!
//! Everything here is deliberately naive: plain nested loops, no im2col, no
//! GEMM, and no code shared with the strategy kernels in [`crate::convops`].
//! The independence is the point — these functions define ground truth for
//! every strategy, so they must not inherit a bug from the code they check.
//!
//! Out-of-bounds (padding) positions read as zero and the multiply is still
//! executed, so the multiply counters reported by the `_counted` variants
//! match the analytic formulas (N·M·K²·F², and M·K²·F² for depthwise)
//! exactly. Masked-out weights are skipped entirely and not counted.

use crate::convops::{ConnectivityMask, ConvSpec, DepthwiseWeights};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};
use crate::Matrix;

/// Standard convolution by definition, with an optional connectivity mask.
///
/// `w_full` is N x (M*K*K); row n holds output channel n's weights in
/// channel-major, kernel-row, kernel-column order.
pub fn oracle_conv<T: Scalar>(
    x: &Tensor4<T>,
    w_full: &Matrix<T>,
    mask: Option<&ConnectivityMask>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    oracle_conv_counted(x, w_full, mask, spec).map(|(z, _)| z)
}

/// Same as [`oracle_conv`], also returning the number of multiplies executed.
pub fn oracle_conv_counted<T: Scalar>(
    x: &Tensor4<T>,
    w_full: &Matrix<T>,
    mask: Option<&ConnectivityMask>,
    spec: &ConvSpec,
) -> Result<(Tensor4<T>, u64)> {
    spec.validate()?;
    let (batch, chans, in_h, in_w) = x.shape();
    let (m, n, k) = (spec.in_channels, spec.out_channels, spec.kernel);
    if chans != m {
        return Err(Error::ShapeMismatch(format!(
            "input has {chans} channels, spec expects {m}"
        )));
    }
    if in_h != in_w {
        return Err(Error::ShapeMismatch(format!(
            "expected square feature map, got {in_h}x{in_w}"
        )));
    }
    if w_full.rows() != n || w_full.cols() != m * k * k {
        return Err(Error::ShapeMismatch(format!(
            "weight matrix is {}x{}, spec expects {}x{}",
            w_full.rows(),
            w_full.cols(),
            n,
            m * k * k
        )));
    }
    if let Some(a) = mask {
        if a.rows() != w_full.rows() || a.cols() != w_full.cols() {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{}, weights are {}x{}",
                a.rows(),
                a.cols(),
                w_full.rows(),
                w_full.cols()
            )));
        }
    }
    let f_out = spec.out_size(in_h)?;
    let pad = spec.padding as isize;

    let mut z = Tensor4::zeros(batch, n, f_out, f_out);
    let mut muls: u64 = 0;
    for b in 0..batch {
        for oc in 0..n {
            for oy in 0..f_out {
                for ox in 0..f_out {
                    let mut acc = T::zero();
                    for ic in 0..m {
                        for kr in 0..k {
                            for kc in 0..k {
                                let col = (ic * k + kr) * k + kc;
                                if let Some(a) = mask {
                                    if !a.active(oc, col) {
                                        continue;
                                    }
                                }
                                let iy = (oy * spec.stride + kr) as isize - pad;
                                let ix = (ox * spec.stride + kc) as isize - pad;
                                let v = if iy >= 0
                                    && ix >= 0
                                    && (iy as usize) < in_h
                                    && (ix as usize) < in_w
                                {
                                    x.at(b, ic, iy as usize, ix as usize)
                                } else {
                                    T::zero()
                                };
                                acc += w_full.at(oc, col) * v;
                                muls += 1;
                            }
                        }
                    }
                    *z.at_mut(b, oc, oy, ox) = acc;
                }
            }
        }
    }
    Ok((z, muls))
}

/// Depthwise convolution by definition: channel i of the output depends only
/// on channel i of the input and filter i.
pub fn oracle_depthwise<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    oracle_depthwise_counted(x, w, spec).map(|(z, _)| z)
}

/// Same as [`oracle_depthwise`], also returning the number of multiplies executed.
pub fn oracle_depthwise_counted<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
) -> Result<(Tensor4<T>, u64)> {
    spec.validate()?;
    if !spec.is_depthwise() {
        return Err(Error::InvalidConfig(format!(
            "oracle_depthwise requires a depthwise spec, got {:?}",
            spec.connectivity
        )));
    }
    let (batch, chans, in_h, in_w) = x.shape();
    let (m, k) = (spec.in_channels, spec.kernel);
    if chans != m {
        return Err(Error::ShapeMismatch(format!(
            "input has {chans} channels, spec expects {m}"
        )));
    }
    if w.channels() != m || w.kernel() != k {
        return Err(Error::ShapeMismatch(format!(
            "weights hold {} filters of {}x{}, spec expects {} of {}x{}",
            w.channels(),
            w.kernel(),
            w.kernel(),
            m,
            k,
            k
        )));
    }
    let f_out = spec.out_size(in_h)?;
    let pad = spec.padding as isize;

    let mut z = Tensor4::zeros(batch, m, f_out, f_out);
    let mut muls: u64 = 0;
    for b in 0..batch {
        for ch in 0..m {
            let filter = w.filter(ch);
            for oy in 0..f_out {
                for ox in 0..f_out {
                    let mut acc = T::zero();
                    for kr in 0..k {
                        for kc in 0..k {
                            let iy = (oy * spec.stride + kr) as isize - pad;
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
                            acc += filter[kr * k + kc] * v;
                            muls += 1;
                        }
                    }
                    *z.at_mut(b, ch, oy, ox) = acc;
                }
            }
        }
    }
    Ok((z, muls))
}
