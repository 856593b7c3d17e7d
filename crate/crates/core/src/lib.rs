//! Speech toolkit for studying how telephone band-limiting and statistical
//! bandwidth extension affect covariance-based speaker verification.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`audio`]: WAV I/O, G.711 A-law companding, corpus manifests
//! - [`filters`]: linear-phase FIR channel filters and 2x rate conversion
//! - [`features`]: framing, linear prediction, LPCC, MFCC, voicing
//! - [`gmm`]: full-covariance Gaussian mixtures with conditional estimation
//! - [`bwe`]: narrowband to wideband extension driven by a joint GMM
//! - [`verify`]: second-moment speaker models and sphericity scoring
//! - [`eval`]: DET curves, detection cost, EER and plot export
//! - [`synth`]: seeded synthetic voices standing in for a recorded corpus

// negated comparisons double as NaN guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod bwe;
pub mod error;
pub mod eval;
pub mod features;
pub mod filters;
pub mod gmm;
pub mod linalg;
pub mod synth;
pub mod verify;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
