//! Energy-aware CNN compression toolkit.
//!
//! The crate models the energy and area cost of convolutional accelerators
//! under four dataflow mappings, applies quantization and magnitude pruning
//! to a small self-contained CNN trainer, and searches compression policies
//! with soft actor-critic so that modeled energy drops while accuracy stays
//! near the uncompressed baseline.
//!
//! The main pieces:
//!
//! - [`net`] — network descriptions, the reference convolution loop nest,
//!   and MAC/parameter counting.
//! - [`cost`] — per-dataflow memory-access counts, adder/LUT sizing, and
//!   the energy/area model with a brute-force counting oracle.
//! - [`compress`] — the discounted quantization/pruning schedule, fake
//!   quantization, and magnitude pruning masks.
//! - [`trainer`] — a desk-scale CNN training engine (forward, backward,
//!   SGD) with straight-through quantization and mask-enforced sparsity.
//! - [`rl`] — the multi-step compression environment, reward, soft
//!   actor-critic, and a random-shooting baseline.
//! - [`report`] — CSV/SVG emission with atomic writes.
//! - [`campaign`] — end-to-end compression campaigns driven by a JSON
//!   config; shared by the CLI and the test suite.

pub mod campaign;
pub mod compress;
pub mod cost;
pub mod net;
pub mod report;
pub mod rl;
pub mod trainer;

use std::fmt;

/// Floating-point scalar the numeric kernels are generic over.
///
/// Training runs in `f32`; oracles and gradient checks instantiate the same
/// code with `f64`.
pub trait Scalar: num_traits::Float + Send + Sync + fmt::Debug + fmt::Display + 'static {}

impl<T> Scalar for T where T: num_traits::Float + Send + Sync + fmt::Debug + fmt::Display + 'static {}

/// Shorthand for converting an `f64` constant into a generic scalar.
pub(crate) fn scalar<T: Scalar>(v: f64) -> T {
    T::from(v).expect("value representable in scalar type")
}
