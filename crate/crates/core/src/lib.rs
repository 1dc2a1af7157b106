//! EPLL image denoising with generalized Gaussian mixture patch priors.
//!
//! The crate is organised bottom-up:
//!
//! * [`ggd`] — scalar generalized Gaussian density, sampling, moment ratio.
//! * [`discrepancy`] — the noisy-coefficient discrepancy: closed forms,
//!   quadrature oracle, and the softplus/lookup-table approximation.
//! * [`shrinkage`] — scalar MAP shrinkage under a generalized Gaussian prior.
//! * [`mixture`] — the mixture model and its modified EM trainer.
//! * [`epll`] — the half-quadratic splitting denoiser.
//! * [`image`], [`metrics`], [`io`] — images, PSNR/SSIM and file formats.
//!
//! With the default `parallel` feature the heavy loops run on rayon; without
//! it every entry point runs sequentially and produces identical results.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrepancy;
pub mod epll;
pub mod error;
pub mod ggd;
pub mod image;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod par;
pub mod quadrature;
pub mod shrinkage;
pub mod special;

pub use discrepancy::{AsymptoticParams, DiscrepancyLut};
pub use epll::{epll_denoise, DenoiseConfig};
pub use error::{Error, Result};
pub use ggd::GgdParams;
pub use image::ImageBuffer;
pub use mixture::{GgmmModel, Mode};
pub use shrinkage::ShrinkContext;
