//! Padding-scheme adaptation and dual-direction training-pathway search for
//! two-class fine-grained image classification on temporally continued
//! datasets.
//!
//! The crate is organised bottom-up:
//!
//! - [`imaging`]: square padding under six fill schemes, colour conversion,
//!   resampling, rotation augmentation, pixel statistics and PPM/PGM files.
//! - [`synthdata`]: a deterministic generator for two drifting datasets and
//!   the tail-time-block test split.
//! - [`nn`]: a small residual CNN with hand-written backpropagation, Adam,
//!   layer freezing, evaluation and GradCAM.
//! - [`pathways`]: padding-scheme adaptation (PSA) and training-pathway
//!   selection (TPS) with five-run aggregation and peak-run selection.
//! - [`explain`]: mean-pixel/confidence tables, padding frequency profiles
//!   and GradCAM exports.

pub mod error;
pub mod explain;
pub mod imaging;
pub mod nn;
pub mod pathways;
pub mod synthdata;

pub use error::{Error, Result};
