//! Restoration stack for hybrid-distorted images.
//!
//! The crate bundles everything needed to study channel-wise feature
//! disentanglement for image restoration at desk scale:
//!
//! - [`tensor`]: dense 4-D `f64` tensors with tape-based reverse-mode
//!   autodiff (convolution, elementwise suite, reductions).
//! - [`gain_control`]: divisive gain-control normalization (GDN) and its
//!   one-shot inverse (IGDN) with constrained learnable parameters.
//! - [`svdo`]: eigenvalue-gap decorrelation loss on the channel Gram
//!   matrix, backed by a cyclic Jacobi eigensolver.
//! - [`layers`]: channel attention, residual blocks and two-branch fusion.
//! - [`net`]: the multi-phase restoration network built from FDM/FAM
//!   blocks, with parameter accounting.
//! - [`synth`]: deterministic hybrid-distortion dataset synthesis (blur,
//!   noise, JPEG artifacts, rain) with manifest-driven regeneration.
//! - [`train`]: Adam, the step-decay schedule, the combined loss,
//!   checkpointing, and the training/evaluation loops.
//! - [`metrics`]: PSNR and SSIM.
//! - [`diagnostics`]: channel correlation reports and per-distortion
//!   channel response profiles.
//!
//! Heavy kernels parallelize over batch and channel planes via rayon when
//! the `parallel` feature (default) is enabled; the sequential fallback
//! produces bit-identical results.

pub mod diagnostics;
pub mod error;
pub mod gain_control;
pub mod layers;
pub mod metrics;
pub mod net;
mod par;
pub mod seeds;
pub mod svdo;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{finite_difference_check, Graph, Shape, Tensor};
