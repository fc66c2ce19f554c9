//! Cluster-guided detection of small, dense objects in aerial imagery.
//!
//! The crate covers the non-learned parts of a cluster-then-detect pipeline:
//! chip proposal by non-maximum merging, cluster refinement, dense center
//! heatmap targets and losses, decoding and fusion of chip detections, rare
//! object paste augmentation, COCO-style evaluation, and a synthetic scene
//! generator with an oracle detector.

pub mod config;
pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod geometry;
pub mod heatmap;
pub mod loss;
pub mod mrm;
pub mod nmm;
pub mod pipeline;
pub mod refine;
pub mod synth;

pub use error::{Error, Result};
