//! Dense keypoint detection: classical detector fusion labels, a compact ESP-style
//! segmentation network trained on them, and homography-based evaluation.

pub mod config;
pub mod dataset;
pub mod descmatch;
pub mod detectors;
pub mod error;
pub mod espnet;
pub mod fusion;
pub mod imgcore;
pub mod metrics;

pub use error::{Error, Result};
