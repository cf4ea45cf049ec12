//! Lumen and external elastic laminae segmentation for intravascular
//! ultrasound frames: multiscale speckle statistics, a random forest, and a
//! seeded random walker on the polar scan lattice.

pub mod confidence;
pub mod config;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod phantom;
pub mod pipeline;
pub mod seeds;
pub mod sparse;
pub mod walker;

pub use config::PipelineConfig;
pub use error::{Error, Result};
