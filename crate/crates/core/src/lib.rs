//! Image-to-conductivity surrogate toolkit for periodic two-phase media.
//!
//! The crate covers the full offline/online pipeline:
//!
//! - [`microgen`] — synthetic periodic microstructures via random sequential
//!   adsorption of circular and rectangular inclusions
//! - [`correlation`] — FFT-based 1- and 2-point spatial correlation functions
//!   and the shifted snapshot vectors fed to the POD
//! - [`podrb`] — batch and streaming (incrementally enriched) reduced bases
//!   for snapshot compression
//! - [`homogenize`] — effective heat-conductivity tensors from a
//!   Fourier-preconditioned CG solver on the periodic pixel grid
//! - [`surrogate`] — feature extraction, standardization and a dense
//!   feed-forward network trained with Adam and early stopping
//! - [`dataset`] — the line-delimited sample manifest and its binary
//!   snapshot sidecar shared between the labelling and training stages

mod binio;
pub mod correlation;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod hash;
pub mod homogenize;
pub mod image;
pub mod microgen;
pub mod podrb;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
pub use image::MicrostructureImage;
