//! Command-line harness: layer-by-layer strategy benchmarks, the layer
//! catalog, the analytic cost table, and the correctness suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dwconv::bench::{
    emit_report, report_to_csv, report_to_json, run_bench, BenchConfig, LayerSource, ReportFormat,
};
use dwconv::convops::{Grouping, Strategy};
use dwconv::lowering::{GemmKind, DEFAULT_GEMM_BLOCK};
use dwconv::models::{cost_model, mobilenet_layers, LayerConfig, ModelVariant};
use dwconv::tensor::Precision;
use dwconv::verify;

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Depthwise convolution strategies: benchmarks, cost model, verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the timing sweep and emit a CSV or JSON report.
    Run(RunArgs),
    /// Print the layer catalog of a model variant.
    Layers(LayersArgs),
    /// Print the analytic cost table (mult-adds, parameters, ratios).
    Cost(CostArgs),
    /// Run the oracle and gradient verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct VariantArgs {
    /// Model variant: base or shallow.
    #[arg(long, default_value = "base")]
    variant: String,
    /// Width multiplier: 1.0, 0.75 or 0.5.
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    /// Input resolution: 224 or 128.
    #[arg(long, default_value_t = 224)]
    resolution: u32,
}

impl VariantArgs {
    fn to_variant(&self) -> Result<ModelVariant, String> {
        let shallow = match self.variant.as_str() {
            "base" => false,
            "shallow" => true,
            other => return Err(format!("unknown variant '{other}' (base or shallow)")),
        };
        let v = ModelVariant {
            shallow,
            width: self.width,
            resolution: self.resolution,
        };
        v.validate().map_err(|e| e.to_string())?;
        Ok(v)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    variant: VariantArgs,
    /// Explicit layer list (JSON, the `bench layers --json` schema) instead
    /// of a model variant.
    #[arg(long)]
    layers_file: Option<PathBuf>,
    /// Comma-separated strategies: standard, cbyc, direct, diag-literal, diag-compact.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cbyc,direct,diag-compact"
    )]
    strategy: Vec<String>,
    /// Group sizes for the diagonalwise strategies (comma-separated).
    #[arg(long = "group-by-size", value_delimiter = ',')]
    group_by_size: Vec<usize>,
    /// Group counts for the diagonalwise strategies (comma-separated).
    #[arg(long = "group-by-count", value_delimiter = ',')]
    group_by_count: Vec<usize>,
    /// Also run ungrouped diagonalwise rows when explicit groups are given.
    #[arg(long)]
    ungrouped: bool,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    /// Element precision: single or double.
    #[arg(long, default_value = "single")]
    precision: String,
    /// GEMM variant: naive or blocked.
    #[arg(long, default_value = "naive")]
    gemm: String,
    /// Tile edge for the blocked GEMM.
    #[arg(long)]
    gemm_block: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Skip the weight-gradient phase (the starred measurement mode).
    #[arg(long)]
    skip_weight_grad: bool,
    /// Worker threads per timed region (batch is split across them).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Sweep every layer, not just the depthwise rows.
    #[arg(long)]
    all_layers: bool,
    /// Output format: csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LayersArgs {
    #[command(flatten)]
    variant: VariantArgs,
    /// Emit the catalog as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    variant: VariantArgs,
    /// Strategy whose per-layer counters to show.
    #[arg(long, default_value = "cbyc")]
    strategy: String,
    #[arg(long = "group-by-size")]
    group_by_size: Option<usize>,
    #[arg(long = "group-by-count")]
    group_by_count: Option<usize>,
    /// Element precision used for workspace sizes.
    #[arg(long, default_value = "single")]
    precision: String,
    /// Emit the full cost report as JSON.
    #[arg(long)]
    json: bool,
    /// Also print the per-layer counter table.
    #[arg(long)]
    per_layer: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trim the sweep sizes for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "single" => Ok(Precision::Single),
        "double" => Ok(Precision::Double),
        other => Err(format!("unknown precision '{other}' (single or double)")),
    }
}

fn parse_gemm(s: &str, block: Option<usize>) -> Result<GemmKind, String> {
    match s {
        "naive" => Ok(GemmKind::Naive),
        "blocked" => Ok(GemmKind::Blocked(block.unwrap_or(DEFAULT_GEMM_BLOCK))),
        other => Err(format!("unknown gemm variant '{other}' (naive or blocked)")),
    }
}

fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>, String> {
    names
        .iter()
        .map(|s| s.trim().parse::<Strategy>().map_err(|e| e.to_string()))
        .collect()
}

fn cmd_run(args: RunArgs) -> Result<i32, String> {
    let source = match &args.layers_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let layers: Vec<LayerConfig> =
                serde_json::from_str(&text).map_err(|e| format!("bad layer file: {e}"))?;
            LayerSource::Explicit(layers)
        }
        None => LayerSource::Variant(args.variant.to_variant()?),
    };

    let mut groupings: Vec<Grouping> = Vec::new();
    if args.ungrouped || (args.group_by_size.is_empty() && args.group_by_count.is_empty()) {
        groupings.push(Grouping::None);
    }
    groupings.extend(args.group_by_count.iter().map(|&g| Grouping::ByCount(g)));
    groupings.extend(args.group_by_size.iter().map(|&s| Grouping::BySize(s)));

    let config = BenchConfig {
        source,
        depthwise_only: !args.all_layers,
        strategies: parse_strategies(&args.strategy)?,
        groupings,
        batch_size: args.batch,
        warmup_iters: args.warmup,
        measured_iters: args.iters,
        precision: parse_precision(&args.precision)?,
        seed: args.seed,
        skip_weight_grad: args.skip_weight_grad,
        gemm: parse_gemm(&args.gemm, args.gemm_block)?,
        threads: args.threads,
    };

    let format: ReportFormat = args
        .format
        .parse()
        .map_err(|e: dwconv::Error| e.to_string())?;
    let report = run_bench(&config).map_err(|e| e.to_string())?;

    match &args.out {
        Some(path) => emit_report(&report, format, path).map_err(|e| e.to_string())?,
        None => match format {
            ReportFormat::Csv => print!("{}", report_to_csv(&report)),
            ReportFormat::Json => {
                let json = serde_json::to_string_pretty(&report_to_json(&report))
                    .map_err(|e| e.to_string())?;
                println!("{json}");
            }
        },
    }
    Ok(report.exit_code())
}

fn cmd_layers(args: LayersArgs) -> Result<i32, String> {
    let variant = args.variant.to_variant()?;
    let layers = mobilenet_layers(&variant).map_err(|e| e.to_string())?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&layers).map_err(|e| e.to_string())?
        );
        return Ok(0);
    }
    println!("# {}", variant.describe());
    println!(
        "{:<6} {:<17} {:<28} out_channels",
        "index", "kind", "configuration"
    );
    for l in &layers {
        println!(
            "{:<6} {:<17} {:<28} {}",
            l.index,
            l.kind.to_string(),
            l.config_string(),
            l.out_channels
        );
    }
    Ok(0)
}

fn cmd_cost(args: CostArgs) -> Result<i32, String> {
    let variant = args.variant.to_variant()?;
    let layers = mobilenet_layers(&variant).map_err(|e| e.to_string())?;
    let strategy: Strategy = args
        .strategy
        .parse()
        .map_err(|e: dwconv::Error| e.to_string())?;
    let grouping = match (args.group_by_count, args.group_by_size) {
        (Some(g), _) => Grouping::ByCount(g),
        (None, Some(s)) => Grouping::BySize(s),
        (None, None) => Grouping::None,
    };
    let precision = parse_precision(&args.precision)?;
    let report = cost_model(&layers, strategy, grouping, precision).map_err(|e| e.to_string())?;

    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?
        );
        return Ok(0);
    }

    println!(
        "# {} / strategy {} / grouping {}",
        variant.describe(),
        strategy,
        report.grouping
    );
    println!(
        "{:<17} {:>16} {:>12} {:>14} {:>12}",
        "type", "mult_adds", "mult_add_%", "parameters", "param_%"
    );
    for share in &report.kind_shares {
        println!(
            "{:<17} {:>16} {:>12.2} {:>14} {:>12.2}",
            share.kind.to_string(),
            share.mult_adds,
            share.mult_add_pct,
            share.parameters,
            share.parameter_pct
        );
    }
    println!(
        "{:<17} {:>16} {:>12.2} {:>14} {:>12.2}",
        "total", report.total_mult_adds, 100.0, report.total_parameters, 100.0
    );

    if args.per_layer {
        println!();
        println!(
            "{:<6} {:<28} {:>14} {:>14} {:>12} {:>14} {:>12}",
            "index",
            "configuration",
            "mult_adds",
            "effective",
            "params",
            "workspace_B",
            "work_items"
        );
        for l in &report.layers {
            println!(
                "{:<6} {:<28} {:>14} {:>14} {:>12} {:>14} {:>12}",
                l.index,
                l.config,
                l.mult_adds,
                l.mult_adds_effective,
                l.parameters,
                l.workspace_bytes,
                l.work_items
            );
        }
    }
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, String> {
    let checks = verify::run_all(args.quick);
    let mut failed = 0;
    for c in &checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag}  {} — {}", c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    println!("{} checks, {} failed", checks.len(), failed);
    Ok(if failed > 0 { 1 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Layers(args) => cmd_layers(args),
        Cmd::Cost(args) => cmd_cost(args),
        Cmd::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
