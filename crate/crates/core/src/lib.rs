//! Multimodal emotion-recognition pipeline.
//!
//! The crate is organized around seven-class emotion probability
//! distributions as the universal currency: modality experts produce them,
//! [`fusion`] combines them. The pieces are:
//!
//! - [`emotions`]: labels, distributions, prediction sets, metrics, CSV I/O
//! - [`facetube`]: bounding-box smoothing, squaring, stabilization, cropping
//! - [`aggregate`]: per-frame probabilities into 70-dim video descriptors
//! - [`classifiers`]: C-SVM (RBF / chi-square, SMO) and softmax regression
//! - [`audio`]: RBM-pretrained MLP with top-N temporal pooling
//! - [`bof`]: bag-of-features pipelines (mouth patches, motion blocks)
//! - [`fusion`]: subset averaging, stacking, simplex weight search, bagging
//!
//! Low-level numeric kernels ([`math`], [`kernels`]) are generic over the
//! scalar type through [`num::Real`]; the pipeline itself runs on the
//! concrete [`Scalar`] alias.

pub mod aggregate;
pub mod audio;
pub mod bof;
pub mod classifiers;
pub mod container;
pub mod emotions;
pub mod error;
pub mod facetube;
pub mod fusion;
pub mod image;
pub mod kernels;
pub mod linalg;
pub mod math;
pub mod num;
pub mod synth;

pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline.
pub type Scalar = f64;

/// Number of emotion classes; fixed by the label set.
pub const NUM_CLASSES: usize = 7;
