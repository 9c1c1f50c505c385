//! Texture segmentation by piecewise patch reconstruction: per-region
//! eigen-patch dictionaries drive a two-phase level set.

pub mod eigenpatch;
pub mod error;
pub mod grid;
pub mod harness;
pub mod levelset;
pub mod region;
pub mod segmenter;

pub use eigenpatch::{GdConfig, PatchBasis, WindowSource};
pub use error::{Error, Result};
pub use grid::{BoundaryPolicy, ImageGrid, LabelMap, Patch, RegionMask};
pub use region::{ErrorField, RegionModel};
pub use segmenter::{
    segment_one_vs_all, segment_two_phase, SegmentationConfig, SegmentationResult,
};
