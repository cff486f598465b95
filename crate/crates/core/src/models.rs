//! MobileNet layer catalog, hyperparameter variants, and the analytic cost
//! model (mult-adds, parameters, workspace, per-launch parallelism).
//!
//! Counting conventions: one fused multiply-accumulate per weight-input
//! product, bias and batch-norm excluded everywhere. For diagonalwise
//! execution with group size S, `mult_adds` carries the cost of the
//! standard convolution the layer is refactorized into (S * M * K^2 * F^2 —
//! the zeros in the expanded weights are real multiplies there), while
//! `mult_adds_effective` excludes the masked-out positions; compact mode
//! executes only the latter.

use serde::{Deserialize, Serialize};

use crate::convops::{Connectivity, ConvSpec, Grouping, Strategy};
use crate::error::{Error, Result};
use crate::tensor::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    ConvStd,
    ConvDw,
    ConvPw,
    FullyConnected,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::ConvStd => "conv_std",
            LayerKind::ConvDw => "conv_dw",
            LayerKind::ConvPw => "conv_pw",
            LayerKind::FullyConnected => "fully_connected",
        };
        write!(f, "{s}")
    }
}

/// One catalog row: kernel, stride, and the input feature-map geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub index: usize,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    /// Input spatial size F (feature maps are F x F).
    pub input_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerConfig {
    /// Zero padding: (K-1)/2 keeps "same" spatial size at stride 1, so 1 for
    /// the 3x3 layers and 0 for pointwise.
    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn out_size(&self) -> usize {
        (self.input_size + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    pub fn is_conv(&self) -> bool {
        self.kind != LayerKind::FullyConnected
    }

    /// The convolution spec of this layer, `None` for fully-connected rows.
    pub fn conv_spec(&self) -> Option<ConvSpec> {
        match self.kind {
            LayerKind::FullyConnected => None,
            LayerKind::ConvDw => Some(ConvSpec::depthwise(
                self.in_channels,
                self.kernel,
                self.stride,
                self.padding(),
            )),
            _ => Some(ConvSpec {
                in_channels: self.in_channels,
                out_channels: self.out_channels,
                kernel: self.kernel,
                stride: self.stride,
                padding: self.padding(),
                connectivity: Connectivity::Dense,
            }),
        }
    }

    /// "3x3/1, 112x112x32" style string: kernel size, stride and the input
    /// feature-map size.
    pub fn config_string(&self) -> String {
        format!(
            "{k}x{k}/{s}, {f}x{f}x{m}",
            k = self.kernel,
            s = self.stride,
            f = self.input_size,
            m = self.in_channels
        )
    }
}

/// MobileNet hyperparameter variant: base 28-layer model at 224 input,
/// optionally shallow (the five 14x14x512 separable blocks removed), thinner
/// (width multiplier), or low-resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub shallow: bool,
    pub width: f64,
    pub resolution: u32,
}

impl ModelVariant {
    pub fn base() -> Self {
        ModelVariant {
            shallow: false,
            width: 1.0,
            resolution: 224,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![1.0, 0.75, 0.5].contains(&self.width) {
            return Err(Error::InvalidConfig(format!(
                "unsupported width multiplier {} (supported: 1.0, 0.75, 0.5)",
                self.width
            )));
        }
        if ![224, 128].contains(&self.resolution) {
            return Err(Error::InvalidConfig(format!(
                "unsupported resolution {} (supported: 224, 128)",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "{} width={} resolution={}",
            if self.shallow { "shallow" } else { "base" },
            self.width,
            self.resolution
        )
    }
}

impl Default for ModelVariant {
    fn default() -> Self {
        ModelVariant::base()
    }
}

/// Round-half-up channel scaling, clamped to at least one channel.
fn scale_channels(c: usize, alpha: f64) -> usize {
    ((c as f64 * alpha + 0.5).floor() as usize).max(1)
}

/// The layer catalog of a MobileNet variant.
///
/// Indices are 1-based positions in the returned list. The image input (3
/// channels) and the classifier output (1000 classes) are not scaled by the
/// width multiplier; every internal channel count is. The resolution
/// multiplier scales every conv layer's spatial size by R/224.
pub fn mobilenet_layers(variant: &ModelVariant) -> Result<Vec<LayerConfig>> {
    variant.validate()?;

    // (kind, kernel, stride, input F, M, N) for the standard 28-layer model.
    let mut rows: Vec<(LayerKind, usize, usize, usize, usize, usize)> =
        vec![(LayerKind::ConvStd, 3, 2, 224, 3, 32)];
    let chain = [
        (1usize, 112usize, 32usize, 64usize),
        (2, 112, 64, 128),
        (1, 56, 128, 128),
        (2, 56, 128, 256),
        (1, 28, 256, 256),
        (2, 28, 256, 512),
    ];
    for &(stride, f, m, n) in &chain {
        rows.push((LayerKind::ConvDw, 3, stride, f, m, m));
        let f_out = (f + 2 - 3) / stride + 1;
        rows.push((LayerKind::ConvPw, 1, 1, f_out, m, n));
    }
    // The five 14x14x512 depthwise separable blocks.
    for _ in 0..5 {
        rows.push((LayerKind::ConvDw, 3, 1, 14, 512, 512));
        rows.push((LayerKind::ConvPw, 1, 1, 14, 512, 512));
    }
    rows.push((LayerKind::ConvDw, 3, 2, 14, 512, 512));
    rows.push((LayerKind::ConvPw, 1, 1, 7, 512, 1024));
    rows.push((LayerKind::ConvDw, 3, 1, 7, 1024, 1024));
    rows.push((LayerKind::ConvPw, 1, 1, 7, 1024, 1024));
    rows.push((LayerKind::FullyConnected, 1, 1, 1, 1024, 1000));

    if variant.shallow {
        // Drop the five stride-1 separable blocks at 14x14x512 (each
        // depthwise layer together with its pointwise partner).
        let mut out = Vec::new();
        let mut skip_pw = 0usize;
        for row in rows {
            let (kind, _, stride, f, m, _) = row;
            if kind == LayerKind::ConvDw && stride == 1 && f == 14 && m == 512 {
                skip_pw += 1;
                continue;
            }
            if kind == LayerKind::ConvPw && skip_pw > 0 {
                skip_pw -= 1;
                continue;
            }
            out.push(row);
        }
        rows = out;
    }

    let alpha = variant.width;
    let layers = rows
        .into_iter()
        .enumerate()
        .map(|(i, (kind, kernel, stride, f, m, n))| {
            let scale_m = kind != LayerKind::ConvStd; // the image itself keeps 3 channels
            let scale_n = kind != LayerKind::FullyConnected; // class count is fixed
            let input_size = if kind == LayerKind::FullyConnected {
                f
            } else {
                (f * variant.resolution as usize) / 224
            };
            LayerConfig {
                index: i + 1,
                kind,
                kernel,
                stride,
                input_size,
                in_channels: if scale_m { scale_channels(m, alpha) } else { m },
                out_channels: if scale_n { scale_channels(n, alpha) } else { n },
            }
        })
        .collect();
    Ok(layers)
}

/// Just the depthwise rows of a catalog.
pub fn depthwise_layers(layers: &[LayerConfig]) -> Vec<&LayerConfig> {
    layers
        .iter()
        .filter(|l| l.kind == LayerKind::ConvDw)
        .collect()
}

/// (refactorized, effective) mult-add counts of one layer under a strategy.
///
/// The first number is the cost of the convolution actually launched
/// (diagonalwise: the grouped standard convolution including the zero
/// positions); the second excludes masked-out positions. They differ only
/// for compact diagonalwise execution.
pub fn layer_mult_adds(
    layer: &LayerConfig,
    strategy: Strategy,
    grouping: Grouping,
) -> Result<(u64, u64)> {
    let (m, n, k) = (
        layer.in_channels as u64,
        layer.out_channels as u64,
        layer.kernel as u64,
    );
    if layer.kind == LayerKind::FullyConnected {
        return Ok((m * n, m * n));
    }
    let f2 = (layer.out_size() * layer.out_size()) as u64;
    if layer.kind != LayerKind::ConvDw {
        let dense = n * m * k * k * f2;
        return Ok((dense, dense));
    }
    let depthwise = m * k * k * f2;
    match strategy {
        Strategy::Standard => Ok((m * m * k * k * f2, m * m * k * k * f2)),
        Strategy::Cbyc | Strategy::Direct => Ok((depthwise, depthwise)),
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            let s = grouping.group_size(layer.in_channels)? as u64;
            let refactorized = s * depthwise;
            let effective = if strategy == Strategy::DiagCompact {
                depthwise
            } else {
                refactorized
            };
            Ok((refactorized, effective))
        }
    }
}

/// Parameter count of one layer (bias-free convention).
pub fn layer_parameters(layer: &LayerConfig) -> u64 {
    let (m, n, k) = (
        layer.in_channels as u64,
        layer.out_channels as u64,
        layer.kernel as u64,
    );
    match layer.kind {
        LayerKind::FullyConnected => m * n,
        LayerKind::ConvDw => m * k * k,
        _ => n * m * k * k,
    }
}

/// Peak per-batch-item workspace of one layer under a strategy: column
/// buffers, plus persistently stored expanded weight and mask matrices for
/// literal diagonalwise plans, plus the materialized dense weights when a
/// depthwise layer is run as a reference standard convolution.
pub fn layer_workspace_bytes(
    layer: &LayerConfig,
    strategy: Strategy,
    grouping: Grouping,
    precision: Precision,
) -> Result<u64> {
    let elem = precision.elem_bytes() as u64;
    let (m, n, k) = (
        layer.in_channels as u64,
        layer.out_channels as u64,
        layer.kernel as u64,
    );
    if layer.kind == LayerKind::FullyConnected {
        return Ok(0);
    }
    let f2 = (layer.out_size() * layer.out_size()) as u64;
    let kk = k * k;
    if layer.kind != LayerKind::ConvDw {
        let _ = n;
        return Ok(m * kk * f2 * elem); // full column buffer
    }
    let elems = match strategy {
        Strategy::Standard => m * kk * f2 + m * m * kk, // col buffer + dense weights
        Strategy::Cbyc => kk * f2,                      // one channel's columns at a time
        Strategy::Direct => 0,
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            let s = grouping.group_size(layer.in_channels)? as u64;
            let col = s * kk * f2;
            match strategy {
                // W_g and A_g stored for all M/S groups: 2 * (M/S) * S * (S*KK).
                Strategy::DiagLiteral => col + 2 * m * s * kk,
                _ => col,
            }
        }
    };
    Ok(elems * elem)
}

/// Independent inner products available to a single kernel launch — the
/// parallelism each method exposes at once. Channel-by-channel launches one
/// channel at a time; the direct kernel covers all channels; diagonalwise
/// covers one group.
pub fn layer_work_items(
    layer: &LayerConfig,
    strategy: Strategy,
    grouping: Grouping,
) -> Result<u64> {
    let (m, n) = (layer.in_channels as u64, layer.out_channels as u64);
    if layer.kind == LayerKind::FullyConnected {
        return Ok(n);
    }
    let f2 = (layer.out_size() * layer.out_size()) as u64;
    if layer.kind != LayerKind::ConvDw {
        return Ok(n * f2);
    }
    Ok(match strategy {
        Strategy::Standard => m * f2,
        Strategy::Cbyc => f2,
        Strategy::Direct => m * f2,
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            grouping.group_size(layer.in_channels)? as u64 * f2
        }
    })
}

/// Per-layer cost record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub index: usize,
    pub kind: LayerKind,
    pub config: String,
    pub mult_adds: u64,
    pub mult_adds_effective: u64,
    pub parameters: u64,
    pub workspace_bytes: u64,
    pub work_items: u64,
}

/// One row of the kind-level ratio table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindShare {
    pub kind: LayerKind,
    pub mult_adds: u64,
    pub parameters: u64,
    pub mult_add_pct: f64,
    pub parameter_pct: f64,
}

/// Analytic cost report: per-layer counters for one strategy plus the
/// strategy-independent kind-level ratio table.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub strategy: Strategy,
    pub grouping: String,
    pub layers: Vec<LayerCost>,
    pub kind_shares: Vec<KindShare>,
    pub total_mult_adds: u64,
    pub total_parameters: u64,
}

/// Build the cost report for a layer list under one strategy/grouping.
///
/// The kind-level ratio table always uses the base counts (dense counts for
/// dense layers, plain depthwise counts for depthwise layers) so it reflects
/// the network itself rather than the execution strategy.
pub fn cost_model(
    layers: &[LayerConfig],
    strategy: Strategy,
    grouping: Grouping,
    precision: Precision,
) -> Result<CostReport> {
    let mut per_layer = Vec::with_capacity(layers.len());
    for layer in layers {
        let (ma, eff) = layer_mult_adds(layer, strategy, grouping)?;
        per_layer.push(LayerCost {
            index: layer.index,
            kind: layer.kind,
            config: layer.config_string(),
            mult_adds: ma,
            mult_adds_effective: eff,
            parameters: layer_parameters(layer),
            workspace_bytes: layer_workspace_bytes(layer, strategy, grouping, precision)?,
            work_items: layer_work_items(layer, strategy, grouping)?,
        });
    }

    let kind_shares = kind_ratio_table(layers)?;
    let total_mult_adds = kind_shares.iter().map(|s| s.mult_adds).sum();
    let total_parameters = kind_shares.iter().map(|s| s.parameters).sum();
    Ok(CostReport {
        strategy,
        grouping: grouping.to_string(),
        layers: per_layer,
        kind_shares,
        total_mult_adds,
        total_parameters,
    })
}

/// Kind-level mult-add and parameter shares (base counts, strategy-free).
pub fn kind_ratio_table(layers: &[LayerConfig]) -> Result<Vec<KindShare>> {
    let kinds = [
        LayerKind::ConvPw,
        LayerKind::ConvDw,
        LayerKind::ConvStd,
        LayerKind::FullyConnected,
    ];
    let mut ma = [0u64; 4];
    let mut pa = [0u64; 4];
    for layer in layers {
        let ki = kinds
            .iter()
            .position(|&k| k == layer.kind)
            .expect("kind covered");
        let (base, _) = layer_mult_adds(layer, Strategy::Cbyc, Grouping::None)?;
        ma[ki] += base;
        pa[ki] += layer_parameters(layer);
    }
    let (tot_ma, tot_pa) = (ma.iter().sum::<u64>(), pa.iter().sum::<u64>());
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| KindShare {
            kind,
            mult_adds: ma[i],
            parameters: pa[i],
            mult_add_pct: 100.0 * ma[i] as f64 / tot_ma.max(1) as f64,
            parameter_pct: 100.0 * pa[i] as f64 / tot_pa.max(1) as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convops::DepthwiseWeights;
    use crate::oracle::{oracle_conv_counted, oracle_depthwise_counted};
    use crate::tensor::{fill_random, Tensor4};
    use crate::Matrix;

    #[test]
    fn base_catalog_has_28_layers_and_the_13_depthwise_rows() {
        let layers = mobilenet_layers(&ModelVariant::base()).unwrap();
        assert_eq!(layers.len(), 28);

        let dw: Vec<(usize, usize, usize, usize)> = depthwise_layers(&layers)
            .iter()
            .map(|l| (l.index, l.stride, l.input_size, l.in_channels))
            .collect();
        let want = vec![
            (2, 1, 112, 32),
            (4, 2, 112, 64),
            (6, 1, 56, 128),
            (8, 2, 56, 128),
            (10, 1, 28, 256),
            (12, 2, 28, 256),
            (14, 1, 14, 512),
            (16, 1, 14, 512),
            (18, 1, 14, 512),
            (20, 1, 14, 512),
            (22, 1, 14, 512),
            (24, 2, 14, 512),
            (26, 1, 7, 1024),
        ];
        assert_eq!(dw, want);
        assert!(depthwise_layers(&layers).iter().all(|l| l.kernel == 3));
        assert_eq!(layers[27].kind, LayerKind::FullyConnected);
        assert_eq!(layers[27].out_channels, 1000);
    }

    #[test]
    fn shallow_removes_the_five_separable_blocks() {
        let layers = mobilenet_layers(&ModelVariant {
            shallow: true,
            ..ModelVariant::base()
        })
        .unwrap();
        assert_eq!(layers.len(), 18);
        let dw = depthwise_layers(&layers);
        assert_eq!(dw.len(), 8);
        // No stride-1 512-channel depthwise layer at 14x14 survives.
        assert!(!dw
            .iter()
            .any(|l| l.stride == 1 && l.in_channels == 512 && l.input_size == 14));
        // The stride-2 one does.
        assert!(dw
            .iter()
            .any(|l| l.stride == 2 && l.in_channels == 512 && l.input_size == 14));
    }

    #[test]
    fn width_multiplier_scales_channels() {
        let half = mobilenet_layers(&ModelVariant {
            width: 0.5,
            ..ModelVariant::base()
        })
        .unwrap();
        assert_eq!(half[1].in_channels, 16); // layer 2: 32 * 0.5

        let thin = mobilenet_layers(&ModelVariant {
            width: 0.75,
            ..ModelVariant::base()
        })
        .unwrap();
        assert_eq!(thin[1].in_channels, 24);
        assert_eq!(thin[25].in_channels, 768); // layer 26: 1024 * 0.75
        assert_eq!(thin[0].in_channels, 3); // image channels untouched
        assert_eq!(thin[27].out_channels, 1000); // classes untouched
        assert_eq!(thin[27].in_channels, 768);
    }

    #[test]
    fn resolution_multiplier_scales_spatial_sizes() {
        let low = mobilenet_layers(&ModelVariant {
            resolution: 128,
            ..ModelVariant::base()
        })
        .unwrap();
        assert_eq!(low[0].input_size, 128);
        assert_eq!(low[1].input_size, 64); // layer 2: 112 * 128/224
        assert_eq!(low[25].input_size, 4); // layer 26: 7 * 128/224
    }

    #[test]
    fn unsupported_variants_error() {
        assert!(mobilenet_layers(&ModelVariant {
            width: 0.25,
            ..ModelVariant::base()
        })
        .is_err());
        assert!(mobilenet_layers(&ModelVariant {
            resolution: 96,
            ..ModelVariant::base()
        })
        .is_err());
    }

    #[test]
    fn ratio_table_matches_hand_computed_shares() {
        let layers = mobilenet_layers(&ModelVariant::base()).unwrap();
        let shares = kind_ratio_table(&layers).unwrap();
        let by_kind = |k: LayerKind| shares.iter().find(|s| s.kind == k).unwrap();

        assert_eq!(shares.iter().map(|s| s.mult_adds).sum::<u64>(), 568_740_352);
        assert_eq!(shares.iter().map(|s| s.parameters).sum::<u64>(), 4_209_088);

        assert!((by_kind(LayerKind::ConvPw).mult_add_pct - 94.857).abs() < 0.01);
        assert!((by_kind(LayerKind::ConvDw).mult_add_pct - 3.057).abs() < 0.01);
        assert!((by_kind(LayerKind::ConvStd).mult_add_pct - 1.906).abs() < 0.01);
        assert!((by_kind(LayerKind::FullyConnected).mult_add_pct - 0.180).abs() < 0.01);

        assert!((by_kind(LayerKind::ConvPw).parameter_pct - 74.591).abs() < 0.01);
        assert!((by_kind(LayerKind::ConvDw).parameter_pct - 1.061).abs() < 0.01);
        assert!((by_kind(LayerKind::ConvStd).parameter_pct - 0.021).abs() < 0.01);
        assert!((by_kind(LayerKind::FullyConnected).parameter_pct - 24.328).abs() < 0.01);

        let ma_sum: f64 = shares.iter().map(|s| s.mult_add_pct).sum();
        let pa_sum: f64 = shares.iter().map(|s| s.parameter_pct).sum();
        assert!((ma_sum - 100.0).abs() < 0.01);
        assert!((pa_sum - 100.0).abs() < 0.01);
    }

    #[test]
    fn diag_mult_adds_monotone_in_group_size() {
        let layer = LayerConfig {
            index: 1,
            kind: LayerKind::ConvDw,
            kernel: 3,
            stride: 1,
            input_size: 14,
            in_channels: 16,
            out_channels: 16,
        };
        let depthwise = layer_mult_adds(&layer, Strategy::Cbyc, Grouping::None)
            .unwrap()
            .0;
        let mut prev = 0;
        for s in [1usize, 2, 4, 8, 16] {
            let (ma, _) =
                layer_mult_adds(&layer, Strategy::DiagLiteral, Grouping::BySize(s)).unwrap();
            assert!(ma >= prev);
            prev = ma;
            if s == 1 {
                assert_eq!(ma, depthwise);
            }
        }
        // One full-size group costs the same as a dense conv with N == M.
        let (full, _) =
            layer_mult_adds(&layer, Strategy::DiagLiteral, Grouping::BySize(16)).unwrap();
        let dense_layer = LayerConfig {
            kind: LayerKind::ConvStd,
            ..layer.clone()
        };
        let (dense, _) = layer_mult_adds(&dense_layer, Strategy::Standard, Grouping::None).unwrap();
        assert_eq!(full, dense);
    }

    #[test]
    fn compact_effective_count_excludes_zeros() {
        let layer = LayerConfig {
            index: 1,
            kind: LayerKind::ConvDw,
            kernel: 3,
            stride: 1,
            input_size: 8,
            in_channels: 8,
            out_channels: 8,
        };
        let (ma, eff) =
            layer_mult_adds(&layer, Strategy::DiagCompact, Grouping::BySize(4)).unwrap();
        assert_eq!(ma, 4 * eff);
        let (lit, lit_eff) =
            layer_mult_adds(&layer, Strategy::DiagLiteral, Grouping::BySize(4)).unwrap();
        assert_eq!(lit, ma);
        assert_eq!(lit_eff, lit);
    }

    #[test]
    fn counters_match_oracle_multiply_counts() {
        // Dense layer against the brute-force count.
        let layer = LayerConfig {
            index: 1,
            kind: LayerKind::ConvStd,
            kernel: 3,
            stride: 1,
            input_size: 6,
            in_channels: 3,
            out_channels: 4,
        };
        let spec = layer.conv_spec().unwrap();
        let x: Tensor4<f64> = fill_random((1, 3, 6, 6), 80);
        let w: Matrix<f64> = Matrix::random(4, 27, 81);
        let (_, muls) = oracle_conv_counted(&x, &w, None, &spec).unwrap();
        assert_eq!(
            muls,
            layer_mult_adds(&layer, Strategy::Standard, Grouping::None)
                .unwrap()
                .0
        );

        // Depthwise layer against the depthwise oracle.
        let layer = LayerConfig {
            index: 2,
            kind: LayerKind::ConvDw,
            kernel: 3,
            stride: 2,
            input_size: 7,
            in_channels: 6,
            out_channels: 6,
        };
        let spec = layer.conv_spec().unwrap();
        let x: Tensor4<f64> = fill_random((1, 6, 7, 7), 82);
        let w = DepthwiseWeights::random(6, 3, 83);
        let (_, muls) = oracle_depthwise_counted(&x, &w, &spec).unwrap();
        assert_eq!(
            muls,
            layer_mult_adds(&layer, Strategy::Cbyc, Grouping::None)
                .unwrap()
                .0
        );

        // Literal diagonalwise: sum the unmasked oracle over the expanded groups.
        let s = 3usize;
        let mut total = 0u64;
        for g in 0..2 {
            let expanded = w.expand_block_diagonal(g * s, s);
            let gx = x.slice_channels(0, g * s, (g + 1) * s);
            let gspec = ConvSpec::dense(s, s, 3, 2, 1);
            let (_, muls) = oracle_conv_counted(&gx, &expanded, None, &gspec).unwrap();
            total += muls;
        }
        assert_eq!(
            total,
            layer_mult_adds(&layer, Strategy::DiagLiteral, Grouping::BySize(3))
                .unwrap()
                .0
        );
    }

    #[test]
    fn catalog_round_trips_through_json() {
        // `bench layers --json` exports this schema; `bench run --layers-file`
        // consumes it.
        let layers = mobilenet_layers(&ModelVariant::base()).unwrap();
        let json = serde_json::to_string(&layers).unwrap();
        let back: Vec<LayerConfig> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, layers);
    }

    #[test]
    fn work_items_reflect_per_launch_parallelism() {
        let layer = LayerConfig {
            index: 1,
            kind: LayerKind::ConvDw,
            kernel: 3,
            stride: 1,
            input_size: 14,
            in_channels: 32,
            out_channels: 32,
        };
        let f2 = 14 * 14;
        assert_eq!(
            layer_work_items(&layer, Strategy::Cbyc, Grouping::None).unwrap(),
            f2
        );
        assert_eq!(
            layer_work_items(&layer, Strategy::Direct, Grouping::None).unwrap(),
            32 * f2
        );
        assert_eq!(
            layer_work_items(&layer, Strategy::DiagCompact, Grouping::BySize(8)).unwrap(),
            8 * f2
        );
    }
}
