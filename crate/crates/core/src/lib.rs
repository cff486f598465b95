//! CPU kernels for depthwise convolutions under four interchangeable
//! strategies, with full backward passes and a benchmark harness.
//!
//! The strategies are:
//!
//! - `standard`: im2col + GEMM standard convolution (the reference workload),
//! - `cbyc`: channel-by-channel, one single-channel convolution per input channel,
//! - `direct`: a specialized kernel accumulating each output pixel in place,
//!   with no intermediate matrix,
//! - `diag`: diagonalwise refactorization — the per-channel filter vectors are
//!   placed on the block diagonal of one large weight matrix so the whole
//!   depthwise convolution runs as a single standard convolution, optionally
//!   split into channel groups.
//!
//! All strategies compute the same function; [`oracle`] holds an independent
//! brute-force reference used to validate them. [`models`] carries the
//! MobileNet layer catalog and the analytic cost model, and [`bench`] the
//! timing harness behind the `bench` binary.

pub mod bench;
pub mod convops;
pub mod error;
pub mod grad;
pub mod lowering;
pub mod models;
pub mod oracle;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Matrix, Precision, Scalar, SplitMix64, Tensor4};
