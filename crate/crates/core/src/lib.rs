//! Post-processing for hallux valgus angle estimation.
//!
//! A segmentation network predicts one heatmap channel per bone axis
//! (proximal phalanx, first metatarsal, second metatarsal). This crate turns
//! such heatmaps into robust line equations, the HVA/IMA angles between
//! them, severity grades, and dataset-level accuracy reports:
//!
//! ```text
//! heatmap --extract (> 0.5)--> points --IRLS (WELSCH)--> lines --> angles
//! ```
//!
//! A seeded simulator ([`simulate`]) stands in for the network so that the
//! whole chain can be exercised without clinical data.

pub mod angles;
pub mod error;
pub mod eval;
pub mod extract;
pub mod fit;
pub mod geometry;
pub mod heatmap;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};

/// Network input width in pixels.
pub const INPUT_WIDTH: u32 = 512;
/// Network input height in pixels.
pub const INPUT_HEIGHT: u32 = 1024;
/// Heatmap width in cells.
pub const HEATMAP_WIDTH: u32 = 128;
/// Heatmap height in cells.
pub const HEATMAP_HEIGHT: u32 = 256;
pub const HEATMAP_CHANNELS: u32 = 3;
/// Input pixels per heatmap cell.
pub const HEATMAP_SCALE: u32 = 4;
