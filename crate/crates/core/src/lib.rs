//! Multi-transmitter localization from sparse received-signal-strength measurements.
//!
//! The pipeline rasterizes an urban layout, simulates RSS from several transmitters,
//! builds a local radio map that keeps only small disks around each transmitter,
//! separates the disks by connected-component analysis and estimates one sub-pixel
//! position per component. The [`metrics`] module scores predictions with mean
//! localization error, count-based false-alarm / missed-detection rates and OSPA.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod localize;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod reconstruct;
pub mod render;
pub mod sampling;
pub mod scenario;
pub mod seed;
pub mod separation;

pub use error::{Error, FormatError, Result};
pub use grid::{Grid, Point};
