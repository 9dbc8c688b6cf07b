//! Pixel kernels for the catalog, per-sample random streams and image I/O.

mod codec;
mod image;
mod kernels;
mod rng;

use std::cell::Cell;

pub use codec::{decode_image, encode_image, encode_png, CodecError};
pub use image::{ImageBuffer, ImageError, LUMA};
pub use kernels::{apply_op, apply_policy};
#[cfg(test)]
pub(crate) use kernels::flip;
pub use rng::{derive_seed, derive_seed_index, mix64, SampleKey, SampleRng};

use crate::policy::PolicyErrors;

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("invalid op:\n{0}")]
    InvalidOp(PolicyErrors),
}

thread_local! {
    static KERNEL_INVOCATIONS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record_kernel_invocation() {
    KERNEL_INVOCATIONS.with(|c| c.set(c.get() + 1));
}

/// Number of kernels run on the current thread (ops whose probability gate
/// passed). Instrumentation for tests and run diagnostics.
pub fn kernel_invocations() -> u64 {
    KERNEL_INVOCATIONS.with(Cell::get)
}
