//! Calibrationless parallel-MRI reconstruction lab.
//!
//! The crate covers the multi-coil forward model, a locally low-rank IRLS
//! solver over multi-coil patch matrices, a small UNET-style residual
//! denoiser with hand-written reverse-mode gradients, the unrolled
//! denoise / data-consistency network with a shared-encoder segmentation
//! head, synthetic phantoms, metrics, and a minimal binary tensor format.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod checkpoint;
pub mod clear;
pub mod config;
pub mod error;
pub mod fourier;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod phantom;
pub mod tensor_io;
pub mod train;
pub mod types;
pub mod unrolled;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
pub use types::{
    ComplexImage, Dataset, KSpaceData, LabelMap, MultiCoilImage, ProbMap, SamplingMask, NUM_CLASSES,
};
