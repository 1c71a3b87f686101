//! Slanted plane sweeping: warp, match, aggregate, normalize, regress.
//!
//! The pipeline runs at a reduced working scale and returns full-resolution
//! plane parameters via convex upsampling.

mod cost;
mod image;
mod upsample;
mod volume;
mod warp;

pub use cost::{
    aggregate_cost, build_cost_volume, drop_low_support, matching_cost, CostVolume, NEUTRAL_COST,
    TEXTURELESS_VARIANCE,
};
pub use image::{ImageRaster, LUMA};
pub use upsample::{convex_upsample, ConvexWeights};
pub use volume::{cost_to_probability, soft_argmax, PlaneParamMap, ProbabilityVolume};
pub use warp::{warp_source, warp_source_to};

pub(crate) use upsample::convex_combine;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RelativePose};
use crate::hypothesis::{build_grid, default_ranges, AxisRange, HypothesisGrid};

/// A posed, calibrated target/source image pair.
#[derive(Debug, Clone, Copy)]
pub struct StereoPair<'a> {
    pub target: &'a ImageRaster,
    pub source: &'a ImageRaster,
    pub pose: &'a RelativePose,
    pub k_target: &'a CameraIntrinsics,
    pub k_source: &'a CameraIntrinsics,
}

impl StereoPair<'_> {
    pub fn validate(&self) -> Result<()> {
        self.k_target.validate()?;
        self.k_source.validate()?;
        self.pose.validate()?;
        let kt = (self.k_target.width, self.k_target.height);
        let ks = (self.k_source.width, self.k_source.height);
        if self.target.dims() != kt {
            return Err(Error::DimensionMismatch {
                expected: kt,
                actual: self.target.dims(),
            });
        }
        if self.source.dims() != ks {
            return Err(Error::DimensionMismatch {
                expected: ks,
                actual: self.source.dims(),
            });
        }
        Ok(())
    }
}

/// Matching, aggregation and regression settings shared by both sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ranges: [AxisRange; 3],
    /// Odd ZNCC window size.
    pub window: usize,
    pub radius: usize,
    pub temperature: f64,
    /// Cost volume resolution divisor, one of 1, 2, 4, 8.
    pub working_scale: usize,
    pub upsample_factor: usize,
    /// Pixels with fewer valid hypotheses than this fraction are dropped
    /// before normalization. Zero keeps every pixel with any valid slice.
    pub min_valid_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ranges: default_ranges(),
            window: 7,
            radius: 2,
            temperature: 0.05,
            working_scale: 4,
            upsample_factor: 4,
            min_valid_fraction: 0.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for r in &self.ranges {
            r.validate()?;
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window must be odd, got {}",
                self.window
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return Err(Error::Config("min_valid_fraction must be in [0, 1]".into()));
        }
        if ![1, 2, 4, 8].contains(&self.working_scale) {
            return Err(Error::Config(format!(
                "working scale must be 1, 2, 4 or 8, got {}",
                self.working_scale
            )));
        }
        if self.upsample_factor != self.working_scale {
            return Err(Error::Config(format!(
                "upsample factor {} must equal working scale {}",
                self.upsample_factor, self.working_scale
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<HypothesisGrid> {
        build_grid(self.ranges)
    }
}

/// Result of [`sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Full-resolution per-pixel plane parameters.
    pub params: PlaneParamMap,
    /// Working-scale parameters before upsampling.
    pub coarse: PlaneParamMap,
    pub probability: ProbabilityVolume,
}

/// Probability volume at working scale for an arbitrary hypothesis set.
pub fn probability_volume(
    pair: &StereoPair<'_>,
    grid: &HypothesisGrid,
    config: &SweepConfig,
) -> Result<ProbabilityVolume> {
    config.validate()?;
    let raw = build_cost_volume(pair, grid, config.window, config.working_scale)?;
    let raw = drop_low_support(&raw, config.min_valid_fraction);
    let agg = aggregate_cost(&raw, config.radius);
    cost_to_probability(&agg, config.temperature)
}

/// Full slanted sweep using the grid from `config`.
pub fn sweep(pair: &StereoPair<'_>, config: &SweepConfig) -> Result<SweepOutput> {
    sweep_with_grid(pair, &config.grid()?, config)
}

/// Full slanted sweep over an explicit hypothesis set.
pub fn sweep_with_grid(
    pair: &StereoPair<'_>,
    grid: &HypothesisGrid,
    config: &SweepConfig,
) -> Result<SweepOutput> {
    let probability = probability_volume(pair, grid, config)?;
    let coarse = soft_argmax(&probability, grid)?;
    let weights = ConvexWeights::bilinear(config.upsample_factor, coarse.width(), coarse.height())?;
    let params = convex_upsample(&coarse, &weights)?;
    Ok(SweepOutput {
        params,
        coarse,
        probability,
    })
}
