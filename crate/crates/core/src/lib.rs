pub mod classify;
pub mod config;
pub mod data;
pub mod distmap;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod raster;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
