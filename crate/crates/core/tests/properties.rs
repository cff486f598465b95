//! Property tests for the structural invariants: indexing round trips,
//! im2col/col2im adjointness, GEMM algebra, linearity of every forward
//! strategy, the output-size formula, and strategy equivalence against the
//! brute-force oracle on randomized shapes.

use proptest::prelude::*;

use dwconv::convops::{
    conv_depthwise_cbyc, conv_depthwise_diag, conv_depthwise_direct, conv_standard,
    plan_diagonalwise, ConvSpec, DepthwiseWeights, DiagMode, Grouping,
};
use dwconv::lowering::{col2im_accumulate, gemm, im2col, ColBuffer, GemmKind};
use dwconv::oracle::oracle_depthwise;
use dwconv::tensor::{fill_random, max_rel_error, Matrix, SplitMix64, Tensor4};

/// Random depthwise geometry small enough to sweep densely.
fn depthwise_case() -> impl Strategy<Value = (ConvSpec, usize)> {
    (
        1usize..=6,
        3usize..=8,
        prop_oneof![Just(1usize), Just(3usize)],
        1usize..=2,
        0usize..=1,
    )
        .prop_filter_map("kernel must fit padded input", |(m, f, k, s, p)| {
            if k <= f + 2 * p {
                Some((ConvSpec::depthwise(m, k, s, p), f))
            } else {
                None
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offset_unflatten_round_trip(
        n in 1usize..4, c in 1usize..5, h in 1usize..6, w in 1usize..6, seed in any::<u64>()
    ) {
        let t: Tensor4<f64> = Tensor4::zeros(n, c, h, w);
        let mut rng = SplitMix64::new(seed);
        let idx = (
            rng.next_range(0, n as u64 - 1) as usize,
            rng.next_range(0, c as u64 - 1) as usize,
            rng.next_range(0, h as u64 - 1) as usize,
            rng.next_range(0, w as u64 - 1) as usize,
        );
        let flat = t.offset(idx.0, idx.1, idx.2, idx.3);
        prop_assert!(flat < t.len());
        prop_assert_eq!(t.unflatten(flat), idx);
    }

    #[test]
    fn im2col_col2im_are_adjoint((spec, f) in depthwise_case(), seed in any::<u64>()) {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x and y.
        let x: Tensor4<f64> = fill_random((1, spec.in_channels, f, f), seed);
        let cols = im2col(&x, 0, &spec).unwrap();
        let (rows, cols_n) = (cols.matrix().rows(), cols.matrix().cols());

        let y: Matrix<f64> = Matrix::random(rows, cols_n, seed ^ 0x5A5A);
        let lhs: f64 = cols.matrix().data().iter().zip(y.data()).map(|(a, b)| a * b).sum();

        let back = col2im_accumulate(&ColBuffer::from_matrix(y, f, &spec).unwrap(), &spec).unwrap();
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gemm_identity_and_associativity(
        n in 1usize..5, m in 1usize..5, p in 1usize..5, q in 1usize..5, seed in any::<u64>()
    ) {
        let a: Matrix<f64> = Matrix::random(n, m, seed);
        prop_assert_eq!(gemm(&a, &Matrix::identity(m)).unwrap(), a.clone());

        let b: Matrix<f64> = Matrix::random(m, p, seed ^ 1);
        let c: Matrix<f64> = Matrix::random(p, q, seed ^ 2);
        let left = gemm(&gemm(&a, &b).unwrap(), &c).unwrap();
        let right = gemm(&a, &gemm(&b, &c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn forward_strategies_are_linear((spec, f) in depthwise_case(), seed in any::<u64>()) {
        let m = spec.in_channels;
        let x1: Tensor4<f64> = fill_random((1, m, f, f), seed);
        let x2: Tensor4<f64> = fill_random((1, m, f, f), seed ^ 3);
        let w = DepthwiseWeights::random(m, spec.kernel, seed ^ 4);
        let (alpha, beta) = (0.75, -1.25);

        let mut combo = x1.clone();
        for (c, (&a, &b)) in combo.data_mut().iter_mut().zip(x1.data().iter().zip(x2.data())) {
            *c = alpha * a + beta * b;
        }

        let check = |f1: &Tensor4<f64>, f2: &Tensor4<f64>, fc: &Tensor4<f64>| {
            for ((a, b), c) in f1.data().iter().zip(f2.data()).zip(fc.data()) {
                let want = alpha * a + beta * b;
                if (want - c).abs() > 1e-10 * (1.0 + want.abs()) {
                    return false;
                }
            }
            true
        };

        let gemm = GemmKind::Naive;
        prop_assert!(check(
            &conv_depthwise_cbyc(&x1, &w, &spec, gemm).unwrap(),
            &conv_depthwise_cbyc(&x2, &w, &spec, gemm).unwrap(),
            &conv_depthwise_cbyc(&combo, &w, &spec, gemm).unwrap(),
        ));
        prop_assert!(check(
            &conv_depthwise_direct(&x1, &w, &spec).unwrap(),
            &conv_depthwise_direct(&x2, &w, &spec).unwrap(),
            &conv_depthwise_direct(&combo, &w, &spec).unwrap(),
        ));
        let plan = plan_diagonalwise(&w, &spec, Grouping::None, DiagMode::Compact).unwrap();
        prop_assert!(check(
            &conv_depthwise_diag(&x1, &plan, &spec, gemm).unwrap(),
            &conv_depthwise_diag(&x2, &plan, &spec, gemm).unwrap(),
            &conv_depthwise_diag(&combo, &plan, &spec, gemm).unwrap(),
        ));
        let expanded = w.expand_block_diagonal(0, m);
        let dense = ConvSpec::dense(m, m, spec.kernel, spec.stride, spec.padding);
        prop_assert!(check(
            &conv_standard(&x1, &expanded, &dense, gemm).unwrap(),
            &conv_standard(&x2, &expanded, &dense, gemm).unwrap(),
            &conv_standard(&combo, &expanded, &dense, gemm).unwrap(),
        ));
    }

    #[test]
    fn output_sizes_follow_the_formula((spec, f) in depthwise_case(), seed in any::<u64>()) {
        let want = (f + 2 * spec.padding - spec.kernel) / spec.stride + 1;
        let x: Tensor4<f64> = fill_random((2, spec.in_channels, f, f), seed);
        let w = DepthwiseWeights::random(spec.in_channels, spec.kernel, seed ^ 5);
        let z = conv_depthwise_direct(&x, &w, &spec).unwrap();
        prop_assert_eq!(z.shape(), (2, spec.in_channels, want, want));

        let plan = plan_diagonalwise(&w, &spec, Grouping::None, DiagMode::Literal).unwrap();
        let zd = conv_depthwise_diag(&x, &plan, &spec, GemmKind::Naive).unwrap();
        prop_assert_eq!(zd.shape(), (2, spec.in_channels, want, want));
    }

    #[test]
    fn strategies_match_oracle((spec, f) in depthwise_case(), seed in any::<u64>()) {
        let m = spec.in_channels;
        let x: Tensor4<f64> = fill_random((2, m, f, f), seed);
        let w = DepthwiseWeights::random(m, spec.kernel, seed ^ 6);
        let want = oracle_depthwise(&x, &w, &spec).unwrap();

        let tol = 1e-12;
        let cbyc = conv_depthwise_cbyc(&x, &w, &spec, GemmKind::Naive).unwrap();
        prop_assert!(max_rel_error(&cbyc, &want).unwrap() <= tol);
        let direct = conv_depthwise_direct(&x, &w, &spec).unwrap();
        prop_assert!(max_rel_error(&direct, &want).unwrap() <= tol);
        for mode in [DiagMode::Literal, DiagMode::Compact] {
            let plan = plan_diagonalwise(&w, &spec, Grouping::None, mode).unwrap();
            let z = conv_depthwise_diag(&x, &plan, &spec, GemmKind::Naive).unwrap();
            prop_assert!(max_rel_error(&z, &want).unwrap() <= tol);
        }
    }

    #[test]
    fn literal_forward_never_touches_masked_zeros(
        (spec, f) in depthwise_case(), seed in any::<u64>()
    ) {
        let w = DepthwiseWeights::random(spec.in_channels, spec.kernel, seed);
        let grouping = if spec.in_channels % 2 == 0 { Grouping::BySize(2) } else { Grouping::None };
        let plan = plan_diagonalwise(&w, &spec, grouping, DiagMode::Literal).unwrap();
        let x: Tensor4<f64> = fill_random((1, spec.in_channels, f, f), seed ^ 7);
        let _ = conv_depthwise_diag(&x, &plan, &spec, GemmKind::Naive).unwrap();
        for group in plan.groups() {
            let (wm, mask) = (group.weight().unwrap(), group.mask().unwrap());
            for (wv, mv) in wm.data().iter().zip(mask.data()) {
                if *mv == 0.0 {
                    prop_assert_eq!(wv.to_bits(), 0.0f64.to_bits());
                }
            }
        }
    }
}
