//! Benchmark harness: sweeps layers x strategies x groupings and times
//! forward, backward-input and backward-weights phases separately.
//!
//! Timings are wall-clock per iteration over a whole batch; warmup
//! iterations run first and are discarded. Everything that is not a timing
//! (input tensors, weights, cost counters) is derived deterministically from
//! the config seed, so two runs of the same config differ only in the
//! measured milliseconds. The `BENCH_SEED` environment variable overrides
//! the config seed.
//!
//! Count columns (`mult_adds`, `params`, `workspace_bytes`) are per input
//! image, copied from the analytic cost model: for diagonalwise rows
//! `mult_adds` is the cost of the grouped standard convolution the layer is
//! refactorized into, so the grouping overhead stays visible even when the
//! compact kernel skips the zeros at runtime.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::convops::{
    conv_depthwise_cbyc, conv_depthwise_diag, conv_depthwise_direct, conv_standard,
    plan_diagonalwise, ConvSpec, DepthwiseWeights, DiagMode, Grouping, Strategy,
};
use crate::error::{Error, Result};
use crate::grad::{
    input_grad_depthwise_cbyc, input_grad_depthwise_direct, input_grad_diag, input_grad_standard,
    weight_grad_depthwise_cbyc, weight_grad_depthwise_direct, weight_grad_diag,
    weight_grad_standard,
};
use crate::lowering::GemmKind;
use crate::models::{
    self, layer_mult_adds, layer_parameters, layer_workspace_bytes, LayerConfig, LayerKind,
    ModelVariant,
};
use crate::tensor::{fill_random, Matrix, Precision, Scalar, SplitMix64, Tensor4};

/// Where the layer list comes from.
#[derive(Debug, Clone)]
pub enum LayerSource {
    Variant(ModelVariant),
    Explicit(Vec<LayerConfig>),
}

/// Full harness configuration.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub source: LayerSource,
    /// Sweep only the depthwise rows (the classic layer-by-layer comparison).
    /// With `false`, dense and fully-connected rows join the sweep and
    /// depthwise-only strategies record "n/a" on them.
    pub depthwise_only: bool,
    pub strategies: Vec<Strategy>,
    /// Grouping choices applied to the diagonalwise strategies; other
    /// strategies always run ungrouped. Empty means `[Grouping::None]`.
    pub groupings: Vec<Grouping>,
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub precision: Precision,
    pub seed: u64,
    pub skip_weight_grad: bool,
    pub gemm: GemmKind,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            source: LayerSource::Variant(ModelVariant::base()),
            depthwise_only: true,
            strategies: vec![Strategy::Cbyc, Strategy::Direct, Strategy::DiagCompact],
            groupings: vec![Grouping::None],
            batch_size: 64,
            warmup_iters: 5,
            measured_iters: 30,
            precision: Precision::Single,
            seed: 42,
            skip_weight_grad: false,
            gemm: GemmKind::Naive,
            threads: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.measured_iters < 1 {
            return Err(Error::InvalidConfig("measured_iters must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one strategy is required".into(),
            ));
        }
        if self.threads < 1 {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Summary statistics over the measured samples, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
    pub min: f64,
}

/// Mean / median / sample stddev / min of a sample vector.
pub fn stats_of(samples: &[f64]) -> Stats {
    assert!(!samples.is_empty());
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let stddev = if n > 1 {
        (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Stats {
        mean,
        median,
        stddev,
        min: sorted[0],
    }
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "detail", rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    NotApplicable(String),
    Error(String),
}

/// One (layer, strategy, grouping) cell of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub layer_index: usize,
    pub layer_config: String,
    pub kind: LayerKind,
    pub strategy: Strategy,
    pub grouping: String,
    pub status: RowStatus,
    pub forward: Option<Stats>,
    pub backward_input: Option<Stats>,
    pub backward_weights: Option<Stats>,
    pub total_mean_ms: Option<f64>,
    pub mult_adds: Option<u64>,
    pub parameters: Option<u64>,
    pub workspace_bytes: Option<u64>,
    pub samples: usize,
}

/// Per-(strategy, grouping) sums of the per-layer means.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalRow {
    pub strategy: Strategy,
    pub grouping: String,
    pub forward_mean_ms: f64,
    pub backward_input_mean_ms: f64,
    pub backward_weights_mean_ms: Option<f64>,
    pub total_mean_ms: f64,
    pub mult_adds: u64,
    pub parameters: u64,
    pub workspace_bytes: u64,
}

/// Run conditions recorded alongside the measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvInfo {
    pub precision: Precision,
    pub gemm: String,
    pub threads: usize,
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub seed: u64,
    pub skip_weight_grad: bool,
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub environment: EnvInfo,
    pub rows: Vec<BenchRow>,
    pub totals: Vec<TotalRow>,
}

impl BenchReport {
    pub fn has_errors(&self) -> bool {
        self.rows
            .iter()
            .any(|r| matches!(r.status, RowStatus::Error(_)))
    }

    /// 0 for a clean sweep, 2 when error rows are present (partial report).
    pub fn exit_code(&self) -> i32 {
        if self.has_errors() {
            2
        } else {
            0
        }
    }
}

/// Deterministic per-layer seed derivation: base seed, layer index and a
/// role salt hashed through the fixture generator.
pub fn derive_seed(base: u64, layer_index: usize, salt: u64) -> u64 {
    let mut rng =
        SplitMix64::new(base ^ (layer_index as u64).wrapping_mul(0x0100_0000_01B3) ^ salt);
    rng.next_u64()
}

fn timed<F: FnOnce() -> Result<()>>(f: F) -> Result<f64> {
    let t0 = Instant::now();
    f()?;
    Ok(t0.elapsed().as_secs_f64() * 1e3)
}

type ChunkOp<'a, T> = dyn Fn(&Tensor4<T>, Option<&Tensor4<T>>) -> Result<()> + Sync + 'a;

/// Run `op` over the pre-split batch chunks, in worker threads when more
/// than one chunk exists. Chunks are disjoint batch ranges, so results are
/// independent of the schedule.
fn run_chunks<T: Scalar>(
    xs: &[Tensor4<T>],
    dzs: Option<&[Tensor4<T>]>,
    op: &ChunkOp<'_, T>,
) -> Result<()> {
    if xs.len() == 1 {
        return op(&xs[0], dzs.map(|d| &d[0]));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| scope.spawn(move || op(x, dzs.map(|d| &d[i]))))
            .collect();
        for h in handles {
            h.join()
                .map_err(|_| Error::InvalidConfig("benchmark worker panicked".into()))??;
        }
        Ok(())
    })
}

struct RowTimings {
    forward: Stats,
    backward_input: Stats,
    backward_weights: Option<Stats>,
    samples: usize,
}

fn measure_row<T: Scalar>(
    layer: &LayerConfig,
    strategy: Strategy,
    grouping: Grouping,
    config: &BenchConfig,
    seed: u64,
) -> Result<RowTimings> {
    let k = layer.kernel;
    let pad = layer.padding();
    let m = layer.in_channels;

    // Depthwise rows run under their own spec; a depthwise layer measured
    // as `standard` runs the dense reference convolution of the same shape.
    let spec = match (layer.kind, strategy) {
        (LayerKind::ConvDw, Strategy::Standard) => ConvSpec::dense(m, m, k, layer.stride, pad),
        _ => layer
            .conv_spec()
            .expect("fully-connected rows are filtered before this point"),
    };
    let f_out = spec.out_size(layer.input_size)?;

    let x: Tensor4<T> = fill_random(
        (config.batch_size, m, layer.input_size, layer.input_size),
        derive_seed(seed, layer.index, 1),
    );
    let dz: Tensor4<T> = fill_random(
        (config.batch_size, spec.out_channels, f_out, f_out),
        derive_seed(seed, layer.index, 2),
    );
    let wseed = derive_seed(seed, layer.index, 3);
    let gemm = config.gemm;

    // Strategy-owned weights / plans, built once outside the timed regions.
    let dense_w: Option<Matrix<T>> = match strategy {
        Strategy::Standard => Some(Matrix::random(
            spec.out_channels,
            spec.in_channels * k * k,
            wseed,
        )),
        _ => None,
    };
    let dw_weights: Option<DepthwiseWeights<T>> = match strategy {
        Strategy::Standard => None,
        _ => Some(DepthwiseWeights::random(m, k, wseed)),
    };
    let plan = match strategy {
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            let mode = if strategy == Strategy::DiagLiteral {
                DiagMode::Literal
            } else {
                DiagMode::Compact
            };
            Some(plan_diagonalwise(
                dw_weights.as_ref().expect("built above"),
                &spec,
                grouping,
                mode,
            )?)
        }
        _ => None,
    };

    let forward: Box<ChunkOp<'_, T>> = match strategy {
        Strategy::Standard => {
            let w = dense_w.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, _| conv_standard(x, w, spec, gemm).map(|_| ()))
        }
        Strategy::Cbyc => {
            let w = dw_weights.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, _| conv_depthwise_cbyc(x, w, spec, gemm).map(|_| ()))
        }
        Strategy::Direct => {
            let w = dw_weights.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, _| conv_depthwise_direct(x, w, spec).map(|_| ()))
        }
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            let plan = plan.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, _| conv_depthwise_diag(x, plan, spec, gemm).map(|_| ()))
        }
    };

    let backward_input: Box<ChunkOp<'_, T>> = match strategy {
        Strategy::Standard => {
            let w = dense_w.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, dz| {
                input_grad_standard(x, w, spec, dz.expect("dz provided"), gemm).map(|_| ())
            })
        }
        Strategy::Cbyc => {
            let w = dw_weights.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, dz| {
                input_grad_depthwise_cbyc(x, w, spec, dz.expect("dz provided"), gemm).map(|_| ())
            })
        }
        Strategy::Direct => {
            let w = dw_weights.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, dz| {
                input_grad_depthwise_direct(x, w, spec, dz.expect("dz provided")).map(|_| ())
            })
        }
        Strategy::DiagLiteral | Strategy::DiagCompact => {
            let plan = plan.as_ref().expect("built above");
            let spec = &spec;
            Box::new(move |x, dz| {
                input_grad_diag(x, plan, spec, dz.expect("dz provided"), gemm).map(|_| ())
            })
        }
    };

    let backward_weights: Option<Box<ChunkOp<'_, T>>> = if config.skip_weight_grad {
        None
    } else {
        Some(match strategy {
            Strategy::Standard => {
                let spec = &spec;
                Box::new(move |x: &Tensor4<T>, dz: Option<&Tensor4<T>>| {
                    weight_grad_standard(x, spec, dz.expect("dz provided"), gemm).map(|_| ())
                })
            }
            Strategy::Cbyc => {
                let w = dw_weights.as_ref().expect("built above");
                let spec = &spec;
                Box::new(move |x, dz| {
                    weight_grad_depthwise_cbyc(x, w, spec, dz.expect("dz provided"), gemm)
                        .map(|_| ())
                })
            }
            Strategy::Direct => {
                let w = dw_weights.as_ref().expect("built above");
                let spec = &spec;
                Box::new(move |x, dz| {
                    weight_grad_depthwise_direct(x, w, spec, dz.expect("dz provided")).map(|_| ())
                })
            }
            Strategy::DiagLiteral | Strategy::DiagCompact => {
                let plan = plan.as_ref().expect("built above");
                let spec = &spec;
                Box::new(move |x, dz| {
                    weight_grad_diag(x, plan, spec, dz.expect("dz provided"), gemm).map(|_| ())
                })
            }
        })
    };

    // Pre-split the batch so no copying happens inside a timed region.
    let (x_chunks, dz_chunks) = if config.threads > 1 {
        (
            x.split_batch(config.threads),
            dz.split_batch(config.threads),
        )
    } else {
        (vec![x], vec![dz])
    };

    let mut fwd_samples = Vec::with_capacity(config.measured_iters);
    let mut bwd_in_samples = Vec::with_capacity(config.measured_iters);
    let mut bwd_w_samples = Vec::with_capacity(config.measured_iters);
    for it in 0..config.warmup_iters + config.measured_iters {
        let t_f = timed(|| run_chunks(&x_chunks, None, forward.as_ref()))?;
        let t_bi = timed(|| run_chunks(&x_chunks, Some(&dz_chunks), backward_input.as_ref()))?;
        let t_bw = match &backward_weights {
            Some(op) => Some(timed(|| {
                run_chunks(&x_chunks, Some(&dz_chunks), op.as_ref())
            })?),
            None => None,
        };
        if it >= config.warmup_iters {
            fwd_samples.push(t_f);
            bwd_in_samples.push(t_bi);
            if let Some(t) = t_bw {
                bwd_w_samples.push(t);
            }
        }
    }

    Ok(RowTimings {
        forward: stats_of(&fwd_samples),
        backward_input: stats_of(&bwd_in_samples),
        backward_weights: if bwd_w_samples.is_empty() {
            None
        } else {
            Some(stats_of(&bwd_w_samples))
        },
        samples: config.measured_iters,
    })
}

fn empty_row(
    layer: &LayerConfig,
    strategy: Strategy,
    grouping: Grouping,
    status: RowStatus,
) -> BenchRow {
    BenchRow {
        layer_index: layer.index,
        layer_config: layer.config_string(),
        kind: layer.kind,
        strategy,
        grouping: grouping.to_string(),
        status,
        forward: None,
        backward_input: None,
        backward_weights: None,
        total_mean_ms: None,
        mult_adds: None,
        parameters: None,
        workspace_bytes: None,
        samples: 0,
    }
}

/// Run the full sweep described by `config`.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let seed = match std::env::var("BENCH_SEED") {
        Ok(v) => v.parse::<u64>().map_err(|_| {
            Error::InvalidConfig(format!("BENCH_SEED must be an integer, got '{v}'"))
        })?,
        Err(_) => config.seed,
    };

    let layers = match &config.source {
        LayerSource::Variant(v) => models::mobilenet_layers(v)?,
        LayerSource::Explicit(list) => list.clone(),
    };
    let layers: Vec<LayerConfig> = if config.depthwise_only {
        layers
            .into_iter()
            .filter(|l| l.kind == LayerKind::ConvDw)
            .collect()
    } else {
        layers
    };

    let groupings = if config.groupings.is_empty() {
        vec![Grouping::None]
    } else {
        config.groupings.clone()
    };

    let mut rows = Vec::new();
    for layer in &layers {
        for &strategy in &config.strategies {
            let cell_groupings: &[Grouping] =
                if matches!(strategy, Strategy::DiagLiteral | Strategy::DiagCompact) {
                    &groupings
                } else {
                    std::slice::from_ref(&Grouping::None)
                };
            for &grouping in cell_groupings {
                if layer.kind == LayerKind::FullyConnected {
                    rows.push(empty_row(
                        layer,
                        strategy,
                        grouping,
                        RowStatus::NotApplicable("fully-connected layer".into()),
                    ));
                    continue;
                }
                if layer.kind != LayerKind::ConvDw && strategy != Strategy::Standard {
                    rows.push(empty_row(
                        layer,
                        strategy,
                        grouping,
                        RowStatus::NotApplicable("depthwise strategy on a dense layer".into()),
                    ));
                    continue;
                }

                let timings = match config.precision {
                    Precision::Single => {
                        measure_row::<f32>(layer, strategy, grouping, config, seed)
                    }
                    Precision::Double => {
                        measure_row::<f64>(layer, strategy, grouping, config, seed)
                    }
                };
                match timings {
                    Ok(t) => {
                        let (ma, _) = layer_mult_adds(layer, strategy, grouping)?;
                        let total = t.forward.mean
                            + t.backward_input.mean
                            + t.backward_weights.map_or(0.0, |s| s.mean);
                        rows.push(BenchRow {
                            layer_index: layer.index,
                            layer_config: layer.config_string(),
                            kind: layer.kind,
                            strategy,
                            grouping: grouping.to_string(),
                            status: RowStatus::Ok,
                            forward: Some(t.forward),
                            backward_input: Some(t.backward_input),
                            backward_weights: t.backward_weights,
                            total_mean_ms: Some(total),
                            mult_adds: Some(ma),
                            parameters: Some(layer_parameters(layer)),
                            workspace_bytes: Some(layer_workspace_bytes(
                                layer,
                                strategy,
                                grouping,
                                config.precision,
                            )?),
                            samples: t.samples,
                        });
                    }
                    Err(e) => {
                        rows.push(empty_row(
                            layer,
                            strategy,
                            grouping,
                            RowStatus::Error(e.to_string()),
                        ));
                    }
                }
            }
        }
    }

    let totals = compute_totals(&rows);
    Ok(BenchReport {
        environment: EnvInfo {
            precision: config.precision,
            gemm: config.gemm.to_string(),
            threads: config.threads,
            batch_size: config.batch_size,
            warmup_iters: config.warmup_iters,
            measured_iters: config.measured_iters,
            seed,
            skip_weight_grad: config.skip_weight_grad,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
        rows,
        totals,
    })
}

/// Sum the per-layer means of every (strategy, grouping) combination, in
/// first-appearance order, over its Ok rows.
pub fn compute_totals(rows: &[BenchRow]) -> Vec<TotalRow> {
    let mut combos: Vec<(Strategy, String)> = Vec::new();
    for row in rows {
        let key = (row.strategy, row.grouping.clone());
        if !combos.contains(&key) {
            combos.push(key);
        }
    }
    let mut totals = Vec::new();
    for (strategy, grouping) in combos {
        let ok_rows: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| {
                r.strategy == strategy && r.grouping == grouping && r.status == RowStatus::Ok
            })
            .collect();
        if ok_rows.is_empty() {
            continue;
        }
        let fwd: f64 = ok_rows
            .iter()
            .map(|r| r.forward.expect("ok row").mean)
            .sum();
        let bwd_in: f64 = ok_rows
            .iter()
            .map(|r| r.backward_input.expect("ok row").mean)
            .sum();
        let bwd_w: Option<f64> = if ok_rows.iter().all(|r| r.backward_weights.is_some()) {
            Some(
                ok_rows
                    .iter()
                    .map(|r| r.backward_weights.expect("checked").mean)
                    .sum(),
            )
        } else {
            None
        };
        totals.push(TotalRow {
            strategy,
            grouping,
            forward_mean_ms: fwd,
            backward_input_mean_ms: bwd_in,
            backward_weights_mean_ms: bwd_w,
            total_mean_ms: fwd + bwd_in + bwd_w.unwrap_or(0.0),
            mult_adds: ok_rows.iter().map(|r| r.mult_adds.unwrap_or(0)).sum(),
            parameters: ok_rows.iter().map(|r| r.parameters.unwrap_or(0)).sum(),
            workspace_bytes: ok_rows.iter().map(|r| r.workspace_bytes.unwrap_or(0)).sum(),
        });
    }
    totals
}

pub const CSV_HEADER: &str = "layer_index,layer_config,strategy,grouping,fwd_mean_ms,fwd_median_ms,fwd_std_ms,bwd_input_mean_ms,bwd_weights_mean_ms,total_mean_ms,mult_adds,params,workspace_bytes";

fn csv_opt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render the report as CSV: the pinned header, one line per row, then one
/// totals line per (strategy, grouping). "n/a" cells are empty.
pub fn report_to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let line = [
            r.layer_index.to_string(),
            format!("\"{}\"", r.layer_config),
            r.strategy.to_string(),
            r.grouping.clone(),
            csv_opt_f(r.forward.map(|s| s.mean)),
            csv_opt_f(r.forward.map(|s| s.median)),
            csv_opt_f(r.forward.map(|s| s.stddev)),
            csv_opt_f(r.backward_input.map(|s| s.mean)),
            csv_opt_f(r.backward_weights.map(|s| s.mean)),
            csv_opt_f(r.total_mean_ms),
            csv_opt_u(r.mult_adds),
            csv_opt_u(r.parameters),
            csv_opt_u(r.workspace_bytes),
        ]
        .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    for t in &report.totals {
        let line = [
            "total".to_string(),
            String::new(),
            t.strategy.to_string(),
            t.grouping.clone(),
            format!("{:.6}", t.forward_mean_ms),
            String::new(),
            String::new(),
            format!("{:.6}", t.backward_input_mean_ms),
            csv_opt_f(t.backward_weights_mean_ms),
            format!("{:.6}", t.total_mean_ms),
            t.mult_adds.to_string(),
            t.parameters.to_string(),
            t.workspace_bytes.to_string(),
        ]
        .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// JSON view: the same fields nested per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonReport {
    pub environment: EnvInfo,
    pub layers: Vec<JsonLayer>,
    pub totals: Vec<TotalRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonLayer {
    pub layer_index: usize,
    pub layer_config: String,
    pub kind: LayerKind,
    pub rows: Vec<JsonRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonRow {
    pub strategy: Strategy,
    pub grouping: String,
    pub status: RowStatus,
    pub forward: Option<Stats>,
    pub backward_input: Option<Stats>,
    pub backward_weights: Option<Stats>,
    pub total_mean_ms: Option<f64>,
    pub mult_adds: Option<u64>,
    pub parameters: Option<u64>,
    pub workspace_bytes: Option<u64>,
    pub samples: usize,
}

/// Group the flat row list by layer for the JSON format.
pub fn report_to_json(report: &BenchReport) -> JsonReport {
    let mut layers: Vec<JsonLayer> = Vec::new();
    for r in &report.rows {
        let row = JsonRow {
            strategy: r.strategy,
            grouping: r.grouping.clone(),
            status: r.status.clone(),
            forward: r.forward,
            backward_input: r.backward_input,
            backward_weights: r.backward_weights,
            total_mean_ms: r.total_mean_ms,
            mult_adds: r.mult_adds,
            parameters: r.parameters,
            workspace_bytes: r.workspace_bytes,
            samples: r.samples,
        };
        match layers.iter_mut().find(|l| l.layer_index == r.layer_index) {
            Some(layer) => layer.rows.push(row),
            None => layers.push(JsonLayer {
                layer_index: r.layer_index,
                layer_config: r.layer_config.clone(),
                kind: r.kind,
                rows: vec![row],
            }),
        }
    }
    JsonReport {
        environment: report.environment.clone(),
        layers,
        totals: report.totals.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidConfig(format!(
                "unknown format '{s}' (csv or json)"
            ))),
        }
    }
}

/// Write the report to `path` in the requested format.
pub fn emit_report(
    report: &BenchReport,
    format: ReportFormat,
    path: &std::path::Path,
) -> Result<()> {
    let contents = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(&report_to_json(report))
            .map_err(|e| Error::InvalidConfig(format!("json serialization failed: {e}")))?,
    };
    std::fs::write(path, contents)?;
    Ok(())
}
