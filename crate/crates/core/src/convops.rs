//! Forward convolution strategies.
//!
//! Four ways to run the same depthwise convolution:
//!
//! - [`conv_depthwise_cbyc`]: one single-channel standard convolution per
//!   input channel (im2col + vector-matrix product, channel by channel),
//! - [`conv_depthwise_direct`]: per-output-pixel accumulation over the K*K
//!   window, no intermediate matrix at all,
//! - [`conv_depthwise_diag`]: diagonalwise refactorization — the filter
//!   vectors are placed on the block diagonal of a large weight matrix and
//!   the whole thing runs as a standard convolution, optionally split into
//!   channel groups,
//! - [`conv_standard`] itself, which the diagonalwise form reduces to.
//!
//! The diagonalwise weight matrix W pairs with a constant binary mask A of
//! the same shape (K*K-long one-blocks on the diagonal); the effective
//! weights are W masked by A on every forward call, so stray off-diagonal
//! values can never leak into the output. [`conv_masked`] generalizes the
//! same mechanism to arbitrary connectivity patterns (group convolutions,
//! pruning masks).

use crate::error::{Error, Result};
use crate::lowering::{gemm_with, im2col_channels, GemmKind};
use crate::tensor::{Matrix, Scalar, SplitMix64, Tensor4};

/// Channel connectivity of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Every output channel sees every input channel.
    Dense,
    /// Output channel i sees input channel i only; N == M.
    Depthwise,
    /// Block connectivity with `g` equal groups; `g` divides M and N.
    Grouped(usize),
    /// Arbitrary connectivity described by an explicit [`ConnectivityMask`].
    Masked,
}

/// Convolution hyperparameters. Feature maps are square; padding is zero-fill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub connectivity: Connectivity,
}

impl ConvSpec {
    pub fn dense(m: usize, n: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: m,
            out_channels: n,
            kernel,
            stride,
            padding,
            connectivity: Connectivity::Dense,
        }
    }

    pub fn depthwise(m: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: m,
            out_channels: m,
            kernel,
            stride,
            padding,
            connectivity: Connectivity::Depthwise,
        }
    }

    pub fn masked(m: usize, n: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: m,
            out_channels: n,
            kernel,
            stride,
            padding,
            connectivity: Connectivity::Masked,
        }
    }

    pub fn is_depthwise(&self) -> bool {
        self.connectivity == Connectivity::Depthwise
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig(format!(
                "kernel and stride must be >= 1, got kernel {} stride {}",
                self.kernel, self.stride
            )));
        }
        match self.connectivity {
            Connectivity::Depthwise if self.out_channels != self.in_channels => {
                Err(Error::InvalidConfig(format!(
                    "depthwise requires N == M, got M={} N={}",
                    self.in_channels, self.out_channels
                )))
            }
            Connectivity::Grouped(g)
                if g == 0 || self.in_channels % g != 0 || self.out_channels % g != 0 =>
            {
                Err(Error::GroupingMismatch(format!(
                    "{g} groups against M={} N={}",
                    self.in_channels, self.out_channels
                )))
            }
            _ => Ok(()),
        }
    }

    /// Output spatial size: floor((F + 2*pad - K) / stride) + 1.
    pub fn out_size(&self, f: usize) -> Result<usize> {
        let padded = f + 2 * self.padding;
        if self.kernel > padded {
            return Err(Error::KernelExceedsInput {
                field: f,
                kernel: self.kernel,
                padding: self.padding,
            });
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

/// The M per-channel filter vectors of a depthwise convolution, each K*K long.
///
/// This is the compact source of truth for depthwise weights; the
/// diagonalwise expansion is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseWeights<T> {
    channels: usize,
    kernel: usize,
    data: Vec<T>,
}

impl<T: Scalar> DepthwiseWeights<T> {
    pub fn zeros(channels: usize, kernel: usize) -> Self {
        DepthwiseWeights {
            channels,
            kernel,
            data: vec![T::zero(); channels * kernel * kernel],
        }
    }

    pub fn random(channels: usize, kernel: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let data = (0..channels * kernel * kernel)
            .map(|_| T::from_f64(rng.next_unit()))
            .collect();
        DepthwiseWeights {
            channels,
            kernel,
            data,
        }
    }

    pub fn from_filters(filters: Vec<Vec<T>>, kernel: usize) -> Result<Self> {
        let kk = kernel * kernel;
        if let Some(bad) = filters.iter().find(|f| f.len() != kk) {
            return Err(Error::ShapeMismatch(format!(
                "filter has {} taps, expected {kk}",
                bad.len()
            )));
        }
        let channels = filters.len();
        Ok(DepthwiseWeights {
            channels,
            kernel,
            data: filters.into_iter().flatten().collect(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    #[inline]
    pub fn filter(&self, i: usize) -> &[T] {
        let kk = self.kernel * self.kernel;
        &self.data[i * kk..(i + 1) * kk]
    }

    #[inline]
    pub fn filter_mut(&mut self, i: usize) -> &mut [T] {
        let kk = self.kernel * self.kernel;
        &mut self.data[i * kk..(i + 1) * kk]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Expanded weight matrix for channels [lo, lo+width): width rows, each
    /// with its filter on the block diagonal and zeros elsewhere.
    pub fn expand_block_diagonal(&self, lo: usize, width: usize) -> Matrix<T> {
        let kk = self.kernel * self.kernel;
        let mut w = Matrix::zeros(width, width * kk);
        for i in 0..width {
            w.row_mut(i)[i * kk..(i + 1) * kk].copy_from_slice(self.filter(lo + i));
        }
        w
    }
}

/// Binary connectivity pattern over a dense weight matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMask {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl ConnectivityMask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        ConnectivityMask {
            rows,
            cols,
            data: vec![1; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ConnectivityMask {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Deterministic mask with roughly `density` fraction of active entries.
    pub fn random(rows: usize, cols: usize, density: f64, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let data = (0..rows * cols)
            .map(|_| u8::from((rng.next_unit() + 1.0) / 2.0 < density))
            .collect();
        ConnectivityMask { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn active(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c] != 0
    }

    pub fn set(&mut self, r: usize, c: usize, active: bool) {
        self.data[r * self.cols + c] = u8::from(active);
    }

    pub fn count_active(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Block-diagonal mask for a `g`-group convolution: g blocks of
/// (N/g) x ((M/g)*K*K) ones. With g == M == N this is exactly the depthwise
/// mask A.
pub fn mask_for_groups(m: usize, n: usize, k: usize, g: usize) -> Result<ConnectivityMask> {
    if g == 0 || m % g != 0 || n % g != 0 {
        return Err(Error::GroupingMismatch(format!(
            "{g} groups against M={m} N={n}"
        )));
    }
    let (bm, bn, kk) = (m / g, n / g, k * k);
    let mut mask = ConnectivityMask::zeros(n, m * kk);
    for b in 0..g {
        for r in b * bn..(b + 1) * bn {
            for c in b * bm * kk..(b + 1) * bm * kk {
                mask.set(r, c, true);
            }
        }
    }
    Ok(mask)
}

/// How to split channels into diagonalwise groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// One group holding all M channels.
    None,
    /// Exactly this many groups, each of M/G channels.
    ByCount(usize),
    /// Groups of exactly this many channels, M/S of them.
    BySize(usize),
}

impl Grouping {
    /// Resolve to a concrete group size for M channels.
    pub fn group_size(&self, channels: usize) -> Result<usize> {
        let size = match *self {
            Grouping::None => channels,
            Grouping::ByCount(g) => {
                if g == 0 || channels % g != 0 {
                    return Err(Error::GroupingMismatch(format!(
                        "{g} groups against {channels} channels"
                    )));
                }
                channels / g
            }
            Grouping::BySize(s) => {
                if s == 0 || channels % s != 0 {
                    return Err(Error::GroupingMismatch(format!(
                        "group size {s} against {channels} channels"
                    )));
                }
                s
            }
        };
        Ok(size.max(1))
    }
}

impl std::fmt::Display for Grouping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grouping::None => write!(f, "none"),
            Grouping::ByCount(g) => write!(f, "by-count:{g}"),
            Grouping::BySize(s) => write!(f, "by-size:{s}"),
        }
    }
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Grouping::None);
        }
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad grouping value in '{s}'")))
        };
        if let Some(v) = s.strip_prefix("by-count:") {
            Ok(Grouping::ByCount(parse(v)?))
        } else if let Some(v) = s.strip_prefix("by-size:") {
            Ok(Grouping::BySize(parse(v)?))
        } else {
            Err(Error::InvalidConfig(format!(
                "unknown grouping '{s}' (expected none, by-count:G or by-size:S)"
            )))
        }
    }
}

/// Literal mode stores the expanded W and mask A per group; compact mode
/// derives masked rows from the filter vectors on the fly and never stores
/// the zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagMode {
    Literal,
    Compact,
}

/// One diagonalwise group: channels [lo, hi) plus, in literal mode, the
/// expanded weight matrix and its constant mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGroup<T> {
    lo: usize,
    hi: usize,
    weight: Option<Matrix<T>>,
    mask: Option<Matrix<T>>,
}

impl<T: Scalar> DiagGroup<T> {
    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn size(&self) -> usize {
        self.hi - self.lo
    }

    pub fn weight(&self) -> Option<&Matrix<T>> {
        self.weight.as_ref()
    }

    /// Mutable expanded weights (literal mode only) — this is what an
    /// optimizer updates between forward calls.
    pub fn weight_mut(&mut self) -> Option<&mut Matrix<T>> {
        self.weight.as_mut()
    }

    pub fn mask(&self) -> Option<&Matrix<T>> {
        self.mask.as_ref()
    }
}

/// Grouping decision plus per-group weight/mask matrices for the
/// diagonalwise strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPlan<T> {
    mode: DiagMode,
    channels: usize,
    kernel: usize,
    group_size: usize,
    filters: DepthwiseWeights<T>,
    groups: Vec<DiagGroup<T>>,
}

impl<T: Scalar> DiagonalPlan<T> {
    pub fn mode(&self) -> DiagMode {
        self.mode
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups(&self) -> &[DiagGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [DiagGroup<T>] {
        &mut self.groups
    }

    /// Filter vectors the plan was built from (the source of truth in
    /// compact mode; literal mode reads its expanded matrices instead).
    pub fn filters(&self) -> &DepthwiseWeights<T> {
        &self.filters
    }

    pub(crate) fn check_spec(&self, spec: &ConvSpec) -> Result<()> {
        if !spec.is_depthwise() {
            return Err(Error::InvalidConfig(format!(
                "diagonalwise plan requires a depthwise spec, got {:?}",
                spec.connectivity
            )));
        }
        if spec.in_channels != self.channels || spec.kernel != self.kernel {
            return Err(Error::InvalidConfig(format!(
                "plan built for {} channels / kernel {}, spec has {} / {}",
                self.channels, self.kernel, spec.in_channels, spec.kernel
            )));
        }
        Ok(())
    }
}

/// Constant mask matrix for one group: K*K-long one-blocks on the diagonal.
fn block_diag_mask<T: Scalar>(width: usize, kk: usize) -> Matrix<T> {
    let mut a = Matrix::zeros(width, width * kk);
    for i in 0..width {
        for v in &mut a.row_mut(i)[i * kk..(i + 1) * kk] {
            *v = T::one();
        }
    }
    a
}

/// Build the diagonalwise execution plan for a depthwise convolution.
pub fn plan_diagonalwise<T: Scalar>(
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    strategy: Grouping,
    mode: DiagMode,
) -> Result<DiagonalPlan<T>> {
    spec.validate()?;
    if !spec.is_depthwise() {
        return Err(Error::InvalidConfig(format!(
            "diagonalwise plan requires a depthwise spec, got {:?}",
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
    let m = spec.in_channels;
    let size = strategy.group_size(m)?;
    let kk = spec.kernel * spec.kernel;

    let groups = (0..m / size.max(1))
        .map(|g| {
            let (lo, hi) = (g * size, (g + 1) * size);
            let (weight, mask) = match mode {
                DiagMode::Literal => (
                    Some(w.expand_block_diagonal(lo, size)),
                    Some(block_diag_mask(size, kk)),
                ),
                DiagMode::Compact => (None, None),
            };
            DiagGroup {
                lo,
                hi,
                weight,
                mask,
            }
        })
        .collect();

    Ok(DiagonalPlan {
        mode,
        channels: m,
        kernel: spec.kernel,
        group_size: size,
        filters: w.clone(),
        groups,
    })
}

/// Strategy names used by the cost model and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Standard,
    Cbyc,
    Direct,
    DiagLiteral,
    DiagCompact,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Standard,
        Strategy::Cbyc,
        Strategy::Direct,
        Strategy::DiagLiteral,
        Strategy::DiagCompact,
    ];
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Standard => "standard",
            Strategy::Cbyc => "cbyc",
            Strategy::Direct => "direct",
            Strategy::DiagLiteral => "diag-literal",
            Strategy::DiagCompact => "diag-compact",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Strategy::Standard),
            "cbyc" => Ok(Strategy::Cbyc),
            "direct" => Ok(Strategy::Direct),
            "diag-literal" => Ok(Strategy::DiagLiteral),
            "diag-compact" => Ok(Strategy::DiagCompact),
            _ => Err(Error::InvalidConfig(format!("unknown strategy '{s}'"))),
        }
    }
}

fn check_input<T: Scalar>(x: &Tensor4<T>, spec: &ConvSpec) -> Result<()> {
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, spec expects {}",
            x.channels(),
            spec.in_channels
        )));
    }
    if x.height() != x.width() {
        return Err(Error::ShapeMismatch(format!(
            "expected square feature map, got {}x{}",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// im2col + GEMM convolution over the full weight matrix, connectivity ignored.
/// Writes output channels [c_out0, c_out0 + w.rows()).
fn conv_dense_into<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    spec: &ConvSpec,
    c_in0: usize,
    c_out0: usize,
    out: &mut Tensor4<T>,
    gemm: GemmKind,
) -> Result<()> {
    let f_out = spec.out_size(x.height())?;
    for b in 0..x.batch() {
        let cols = im2col_channels(x, b, c_in0, spec)?;
        let z = gemm_with(w, cols.matrix(), gemm)?;
        for r in 0..z.rows() {
            let start = out.offset(b, c_out0 + r, 0, 0);
            out.data_mut()[start..start + f_out * f_out].copy_from_slice(z.row(r));
        }
    }
    Ok(())
}

/// Standard convolution: Z = W * im2col(X) per batch item.
///
/// `w` is N x (M*K*K) with patch entries channel-major, kernel-row,
/// kernel-column — row n is output channel n.
pub fn conv_standard<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    spec: &ConvSpec,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    spec.validate()?;
    check_input(x, spec)?;
    let (m, n, k) = (spec.in_channels, spec.out_channels, spec.kernel);
    if w.rows() != n || w.cols() != m * k * k {
        return Err(Error::ShapeMismatch(format!(
            "weight matrix is {}x{}, spec expects {}x{}",
            w.rows(),
            w.cols(),
            n,
            m * k * k
        )));
    }
    let f_out = spec.out_size(x.height())?;
    let mut out = Tensor4::zeros(x.batch(), n, f_out, f_out);
    conv_dense_into(x, w, spec, 0, 0, &mut out, gemm)?;
    Ok(out)
}

fn check_depthwise<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
) -> Result<()> {
    spec.validate()?;
    if !spec.is_depthwise() {
        return Err(Error::InvalidConfig(format!(
            "expected a depthwise spec, got {:?}",
            spec.connectivity
        )));
    }
    check_input(x, spec)?;
    if w.channels() != spec.in_channels || w.kernel() != spec.kernel {
        return Err(Error::ShapeMismatch(format!(
            "weights hold {} filters of kernel {}, spec expects {} of {}",
            w.channels(),
            w.kernel(),
            spec.in_channels,
            spec.kernel
        )));
    }
    Ok(())
}

/// Channel-by-channel method: for each channel i, run a 1-channel standard
/// convolution z_i = w_i * C_i and tile the result rows into Z.
pub fn conv_depthwise_cbyc<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    check_depthwise(x, w, spec)?;
    let m = spec.in_channels;
    let f_out = spec.out_size(x.height())?;
    let chan_spec = ConvSpec::dense(1, 1, spec.kernel, spec.stride, spec.padding);

    let mut out = Tensor4::zeros(x.batch(), m, f_out, f_out);
    for ch in 0..m {
        let w_row = Matrix::from_vec(1, spec.kernel * spec.kernel, w.filter(ch).to_vec())?;
        for b in 0..x.batch() {
            let cols = im2col_channels(x, b, ch, &chan_spec)?;
            let z = gemm_with(&w_row, cols.matrix(), gemm)?;
            let start = out.offset(b, ch, 0, 0);
            out.data_mut()[start..start + f_out * f_out].copy_from_slice(z.row(0));
        }
    }
    Ok(out)
}

/// Specialized direct kernel: each output pixel accumulates its own K*K
/// window in place. No column matrix is ever built. Padding taps contribute
/// an explicit zero product so the accumulation order (kernel-row major)
/// matches the channel-by-channel dot product term for term.
pub fn conv_depthwise_direct<T: Scalar>(
    x: &Tensor4<T>,
    w: &DepthwiseWeights<T>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    check_depthwise(x, w, spec)?;
    let (batch, m, in_h, in_w) = x.shape();
    let k = spec.kernel;
    let f_out = spec.out_size(in_h)?;
    let pad = spec.padding as isize;

    let mut out = Tensor4::zeros(batch, m, f_out, f_out);
    for b in 0..batch {
        for ch in 0..m {
            let filter = w.filter(ch);
            for oy in 0..f_out {
                for ox in 0..f_out {
                    let mut acc = T::zero();
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
                            acc += filter[kr * k + kc] * v;
                        }
                    }
                    *out.at_mut(b, ch, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Masked copy of the expanded weights: entries where the mask is zero come
/// out as exact +0.0 no matter what the weight holds.
fn apply_mask<T: Scalar>(w: &Matrix<T>, a: &Matrix<T>) -> Matrix<T> {
    let mut out = w.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(a.data()) {
        if m == T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// Diagonalwise forward: per group, the masked weight matrix W ⊙ A runs as
/// one standard convolution over that group's channel slice.
///
/// Literal mode re-applies the mask on every call, so off-diagonal garbage
/// written into the plan (by an optimizer, say) never reaches the output.
/// Compact mode reads the filter vectors directly and performs the identical
/// masked GEMM without ever touching a stored zero.
pub fn conv_depthwise_diag<T: Scalar>(
    x: &Tensor4<T>,
    plan: &DiagonalPlan<T>,
    spec: &ConvSpec,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
    spec.validate()?;
    plan.check_spec(spec)?;
    check_input(x, spec)?;

    let f_out = spec.out_size(x.height())?;
    let kk = spec.kernel * spec.kernel;
    let mut out = Tensor4::zeros(x.batch(), spec.in_channels, f_out, f_out);

    for group in &plan.groups {
        let size = group.size();
        let gspec = ConvSpec::dense(size, size, spec.kernel, spec.stride, spec.padding);
        match plan.mode {
            DiagMode::Literal => {
                let w_hat = apply_mask(
                    group.weight.as_ref().expect("literal plan stores weights"),
                    group.mask.as_ref().expect("literal plan stores masks"),
                );
                conv_dense_into(x, &w_hat, &gspec, group.lo, group.lo, &mut out, gemm)?;
            }
            DiagMode::Compact => {
                for b in 0..x.batch() {
                    let cols = im2col_channels(x, b, group.lo, &gspec)?;
                    for i in 0..size {
                        let filter = plan.filters.filter(group.lo + i);
                        let start = out.offset(b, group.lo + i, 0, 0);
                        let zrow = &mut out.data_mut()[start..start + f_out * f_out];
                        for (t, &wv) in filter.iter().enumerate() {
                            let crow = cols.matrix().row(i * kk + t);
                            for (zv, &cv) in zrow.iter_mut().zip(crow) {
                                *zv += wv * cv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Standard convolution with the weights filtered through a connectivity
/// mask. Depthwise is the special case where the mask is the block-diagonal
/// A; group convolutions use [`mask_for_groups`].
pub fn conv_masked<T: Scalar>(
    x: &Tensor4<T>,
    w: &Matrix<T>,
    mask: &ConnectivityMask,
    spec: &ConvSpec,
    gemm: GemmKind,
) -> Result<Tensor4<T>> {
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
    conv_standard(x, &w_hat, spec, gemm)
}

/// Weights with masked-out entries replaced by exact +0.0.
pub fn masked_weights<T: Scalar>(w: &Matrix<T>, mask: &ConnectivityMask) -> Matrix<T> {
    let mut out = w.clone();
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            if !mask.active(r, c) {
                *out.at_mut(r, c) = T::zero();
            }
        }
    }
    out
}
