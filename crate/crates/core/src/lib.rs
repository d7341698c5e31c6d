//! Iris segmentation for cataract-affected eye images with a dense-block
//! fusion network.
//!
//! The pipeline: [`data`] loads or synthesizes eye images and masks,
//! [`augment`] expands a training set tenfold, [`model`] builds the network,
//! [`train`] fits it with per-pixel cross-entropy, [`infer`] turns confidence
//! maps into masks and overlays, and [`eval`] scores masks and match-score
//! distributions.

pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod infer;
pub mod model;
pub mod train;

pub use error::{Result, SegError};
