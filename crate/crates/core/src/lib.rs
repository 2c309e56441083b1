//! Degradation-aware conditioning and structure-preserving noise for
//! diffusion-based super-resolution, at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`rng`]: dense `f64` arrays, convolution, pooling,
//!   resizing and reproducible Gaussian sampling.
//! * [`descriptor`]: the six-statistic degradation descriptor of an image.
//! * [`degradations`]: synthetic degradations, a procedural test corpus and
//!   severity sweeps.
//! * [`adapter`]: the degradation-token adapter (MLP, LayerNorm, timestep
//!   scale-and-shift), token appending and single-head cross-attention, with
//!   exact backward passes.
//! * [`sani`]: edge-strength maps and edge-modulated forward noising.
//! * [`diffusion`]: noise schedules, the noise-prediction loss, a toy
//!   denoiser, its training loop and finite-difference gradient checks.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and a plain sequential loop otherwise.
//! Results are identical in both modes.

pub mod adapter;
pub mod degradations;
pub mod descriptor;
pub mod diffusion;
mod error;
pub mod exec;
pub mod netpbm;
pub mod rng;
pub mod sani;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Execution;
pub use rng::Rng;
pub use tensor::{Image, Padding, Tensor};
