//! Landmark-accelerated memory-based collaborative filtering.
//!
//! Rows of a rating matrix (users, or items in item-based mode) are
//! re-embedded by their similarities to a few selected landmark rows, and
//! kNN rating prediction runs on similarities computed in that reduced
//! space. The crate also carries the plain all-pairs kNN baseline and a
//! cross-validation harness measuring accuracy (MAE) and runtime.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod landmark;
pub mod predict;
pub mod ratings;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
