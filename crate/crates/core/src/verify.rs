//! Correctness suite behind `bench verify`: strategy outputs against the
//! brute-force oracle, analytic gradients against finite differences, and
//! the masking invariants. Runs in double precision.

use crate::convops::{
    conv_depthwise_cbyc, conv_depthwise_diag, conv_depthwise_direct, plan_diagonalwise, ConvSpec,
    DepthwiseWeights, DiagMode, Grouping,
};
use crate::grad::{backward_depthwise, fd_check, weight_grad_diag, DepthwiseKind, WeightGrads};
use crate::lowering::GemmKind;
use crate::models::{depthwise_layers, mobilenet_layers, ModelVariant};
use crate::oracle::oracle_depthwise;
use crate::tensor::{fill_random, max_rel_error, SplitMix64, Tensor4};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// The 13 depthwise shapes scaled to desk size, with their input sizes:
/// spatial size capped at 14, channels capped at 64, strides preserved.
pub fn scaled_depthwise_cases() -> Vec<(ConvSpec, usize)> {
    let layers = mobilenet_layers(&ModelVariant::base()).expect("base variant is valid");
    depthwise_layers(&layers)
        .iter()
        .map(|l| {
            let m = l.in_channels.min(64);
            (
                ConvSpec::depthwise(m, l.kernel, l.stride, l.padding()),
                l.input_size.min(14),
            )
        })
        .collect()
}

/// Deterministic randomized depthwise spec for one seed: M in 1..=8,
/// F in 3..=10, K in {1,3,5}, stride in {1,2}, padding in 0..=2, re-drawn
/// until the kernel fits the padded input.
pub fn random_depthwise_case(seed: u64) -> (ConvSpec, usize) {
    let mut rng = SplitMix64::new(seed);
    loop {
        let m = rng.next_range(1, 8) as usize;
        let f = rng.next_range(3, 10) as usize;
        let k = [1usize, 3, 5][rng.next_range(0, 2) as usize];
        let stride = rng.next_range(1, 2) as usize;
        let padding = rng.next_range(0, 2) as usize;
        if k <= f + 2 * padding {
            return (ConvSpec::depthwise(m, k, stride, padding), f);
        }
    }
}

/// Groupings from the acceptance sweep that divide `m`.
pub fn divisible_groupings(m: usize) -> Vec<Grouping> {
    let mut out = vec![Grouping::None];
    for g in [2usize, 4] {
        if m % g == 0 {
            out.push(Grouping::ByCount(g));
        }
    }
    for s in [2usize, 4, 8] {
        if m % s == 0 {
            out.push(Grouping::BySize(s));
        }
    }
    out
}

/// Worst relative error of all four depthwise strategies against the oracle
/// on one case, across every divisible grouping and both plan modes.
pub fn strategy_sweep_error<T: crate::tensor::Scalar>(
    spec: &ConvSpec,
    f: usize,
    seed: u64,
    gemm: GemmKind,
) -> f64 {
    let x: Tensor4<T> = fill_random((2, spec.in_channels, f, f), seed);
    let w = DepthwiseWeights::random(spec.in_channels, spec.kernel, seed ^ 0xABCD);
    let want = oracle_depthwise(&x, &w, spec).expect("oracle accepts the sweep specs");

    let mut worst: f64 = 0.0;
    let mut track = |z: &Tensor4<T>| {
        worst = worst.max(max_rel_error(z, &want).expect("same shapes"));
    };

    track(&conv_depthwise_cbyc(&x, &w, spec, gemm).expect("cbyc"));
    track(&conv_depthwise_direct(&x, &w, spec).expect("direct"));
    for grouping in divisible_groupings(spec.in_channels) {
        for mode in [DiagMode::Literal, DiagMode::Compact] {
            let plan = plan_diagonalwise(&w, spec, grouping, mode).expect("divisible grouping");
            track(&conv_depthwise_diag(&x, &plan, spec, gemm).expect("diag"));
        }
    }
    worst
}

fn equivalence_checks(quick: bool) -> Vec<Check> {
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for (i, (spec, f)) in scaled_depthwise_cases().iter().enumerate() {
        worst = worst.max(strategy_sweep_error::<f64>(
            spec,
            *f,
            1000 + i as u64,
            GemmKind::Naive,
        ));
    }
    checks.push(Check::new(
        "strategy equivalence on scaled depthwise layers (double, naive gemm)",
        worst <= 1e-12,
        format!("max rel error {worst:.3e} (tolerance 1e-12)"),
    ));

    let seeds = if quick { 100..110u64 } else { 100..150u64 };
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let (spec, f) = random_depthwise_case(seed);
        worst = worst.max(strategy_sweep_error::<f64>(&spec, f, seed, GemmKind::Naive));
    }
    checks.push(Check::new(
        "strategy equivalence on randomized specs (double, naive gemm)",
        worst <= 1e-12,
        format!("max rel error {worst:.3e} (tolerance 1e-12)"),
    ));

    checks
}

fn gradient_checks(quick: bool) -> Vec<Check> {
    let mut checks = Vec::new();
    let instances = if quick { 3 } else { 8 };
    let step = 1e-4;

    let mut worst_fd: f64 = 0.0;
    let mut worst_agree: f64 = 0.0;
    for i in 0..instances {
        let (spec, f) = random_depthwise_case(2000 + i);
        let x: Tensor4<f64> = fill_random((1, spec.in_channels, f, f), 3000 + i);
        let w = DepthwiseWeights::random(spec.in_channels, spec.kernel, 4000 + i);
        let f_out = spec.out_size(f).expect("valid case");
        let dz: Tensor4<f64> = fill_random((1, spec.in_channels, f_out, f_out), 5000 + i);

        let g =
            backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Cbyc, false).expect("backward");
        let analytic = match g.d_weights.expect("weight grads requested") {
            WeightGrads::Depthwise(dw) => dw,
            other => panic!("unexpected container {other:?}"),
        };
        let forward = |p: &[f64]| {
            let mut wp = DepthwiseWeights::zeros(spec.in_channels, spec.kernel);
            wp.data_mut().copy_from_slice(p);
            conv_depthwise_cbyc(&x, &wp, &spec, GemmKind::Naive)
                .expect("forward")
                .data()
                .to_vec()
        };
        worst_fd = worst_fd.max(fd_check(
            forward,
            w.data(),
            analytic.data(),
            dz.data(),
            step,
        ));

        let gd =
            backward_depthwise(&x, &w, &spec, &dz, DepthwiseKind::Direct, false).expect("backward");
        worst_agree = worst_agree.max(max_rel_error(&g.d_input, &gd.d_input).expect("same shapes"));
        if let Some(WeightGrads::Depthwise(dwd)) = gd.d_weights {
            worst_agree = worst_agree.max(crate::tensor::max_rel_error_slice(
                analytic.data(),
                dwd.data(),
            ));
        }
    }
    checks.push(Check::new(
        "depthwise weight gradients vs central differences",
        worst_fd <= 1e-6,
        format!("max rel error {worst_fd:.3e} (tolerance 1e-6)"),
    ));
    checks.push(Check::new(
        "cbyc and direct backward agree",
        worst_agree <= 1e-12,
        format!("max rel error {worst_agree:.3e} (tolerance 1e-12)"),
    ));
    checks
}

fn mask_invariant_checks() -> Vec<Check> {
    let mut checks = Vec::new();

    let m = 8;
    let spec = ConvSpec::depthwise(m, 3, 1, 1);
    let x: Tensor4<f64> = fill_random((1, m, 7, 7), 6000);
    let w = DepthwiseWeights::random(m, 3, 6001);
    let dz: Tensor4<f64> = fill_random((1, m, 7, 7), 6002);
    let mut plan =
        plan_diagonalwise(&w, &spec, Grouping::BySize(4), DiagMode::Literal).expect("divisible");

    let grads = match weight_grad_diag(&x, &plan, &spec, &dz, GemmKind::Naive).expect("grads") {
        WeightGrads::DiagLiteral(gs) => gs,
        other => panic!("unexpected container {other:?}"),
    };
    let mut off_diag_clean = true;
    for (g, group) in grads.iter().zip(plan.groups()) {
        let mask = group.mask().expect("literal plan");
        for (gv, mv) in g.data().iter().zip(mask.data()) {
            if *mv == 0.0 && gv.to_bits() != 0 {
                off_diag_clean = false;
            }
        }
    }
    checks.push(Check::new(
        "literal weight gradients are exactly zero off the diagonal",
        off_diag_clean,
        "checked bitwise against each group mask",
    ));

    let lr = 0.01;
    for _ in 0..10 {
        let grads = match weight_grad_diag(&x, &plan, &spec, &dz, GemmKind::Naive).expect("grads") {
            WeightGrads::DiagLiteral(gs) => gs,
            other => panic!("unexpected container {other:?}"),
        };
        for (group, g) in plan.groups_mut().iter_mut().zip(&grads) {
            let wm = group.weight_mut().expect("literal plan");
            for (wv, gv) in wm.data_mut().iter_mut().zip(g.data()) {
                *wv -= lr * gv;
            }
        }
    }
    let mut still_zero = true;
    for group in plan.groups() {
        let (wm, mask) = (
            group.weight().expect("literal"),
            group.mask().expect("literal"),
        );
        for (wv, mv) in wm.data().iter().zip(mask.data()) {
            if *mv == 0.0 && wv.to_bits() != 0 {
                still_zero = false;
            }
        }
    }
    checks.push(Check::new(
        "off-diagonal weights stay bitwise zero across 10 sgd steps",
        still_zero,
        "masked gradient updates only touch the diagonal blocks",
    ));

    checks
}

fn degeneracy_checks() -> Vec<Check> {
    let m = 8;
    let spec = ConvSpec::depthwise(m, 3, 1, 1);
    let x: Tensor4<f64> = fill_random((2, m, 9, 9), 7000);
    let w = DepthwiseWeights::random(m, 3, 7001);

    let by_one = plan_diagonalwise(&w, &spec, Grouping::ByCount(1), DiagMode::Compact).unwrap();
    let ungrouped = plan_diagonalwise(&w, &spec, Grouping::None, DiagMode::Compact).unwrap();
    let z1 = conv_depthwise_diag(&x, &by_one, &spec, GemmKind::Naive).unwrap();
    let z2 = conv_depthwise_diag(&x, &ungrouped, &spec, GemmKind::Naive).unwrap();
    let err_none = max_rel_error(&z1, &z2).unwrap();

    let by_m = plan_diagonalwise(&w, &spec, Grouping::ByCount(m), DiagMode::Compact).unwrap();
    let z3 = conv_depthwise_diag(&x, &by_m, &spec, GemmKind::Naive).unwrap();
    let cbyc = conv_depthwise_cbyc(&x, &w, &spec, GemmKind::Naive).unwrap();
    let err_cbyc = max_rel_error(&z3, &cbyc).unwrap();

    vec![
        Check::new(
            "by-count(1) equals ungrouped",
            err_none <= 1e-12,
            format!("max rel error {err_none:.3e}"),
        ),
        Check::new(
            "by-count(M) equals channel-by-channel",
            err_cbyc <= 1e-12,
            format!("max rel error {err_cbyc:.3e}"),
        ),
    ]
}

/// Run the whole verification suite. `quick` trims the sweep sizes.
pub fn run_all(quick: bool) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(equivalence_checks(quick));
    checks.extend(gradient_checks(quick));
    checks.extend(mask_invariant_checks());
    checks.extend(degeneracy_checks());
    checks
}
