//! Planar multi-view stereo by slanted plane sweeping.
//!
//! The crate estimates per-pixel plane parameters `p = n / e` from a posed
//! image pair, pools them over plane instances into piecewise-planar depth,
//! and scores the result with depth and detection metrics. A synthetic scene
//! renderer provides exact ground truth for testing.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod error;
pub mod geometry;
pub mod hypothesis;
pub mod io;
pub mod metrics;
pub mod pairs;
pub mod pooling;
pub mod raster;
pub mod sweep;
pub mod synth;

pub use baselines::{fit_plane_lsq, fronto_sweep, DepthHypothesisSet, FrontoOutput};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use geometry::{
    depth_to_point, induce_homography, plane_to_depth, CameraIntrinsics, DepthMap, Homography,
    PixelGrid, PlaneParam, RelativePose,
};
pub use hypothesis::{build_grid, grid_coverage, select_bounds, AxisRange, HypothesisGrid};
pub use metrics::{depth_metrics, detection_ap, DepthMetrics, DetectionMetrics};
pub use pairs::{select_pairs, PairSelection, StereoPairRecord};
pub use pooling::{
    pixel_planar_depth, segment_planes, soft_pool, stitch_depth, PlaneInstance, PlaneInstanceSet,
    SegmentConfig, SoftMask,
};
pub use raster::{Mask, Raster};
pub use sweep::{sweep, ImageRaster, PlaneParamMap, StereoPair, SweepConfig, SweepOutput};
pub use synth::{render, RenderedPair, SceneSpec};
