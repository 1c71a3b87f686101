//! Fronto-parallel depth sweep and least-squares plane fitting.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, PixelGrid, PlaneParam};
use crate::hypothesis::HypothesisGrid;
use crate::pooling::SoftMask;
use crate::sweep::{
    convex_combine, probability_volume, ConvexWeights, ProbabilityVolume, StereoPair, SweepConfig,
};

/// Relative eigenvalue floor below which the normal equations count as singular.
const FIT_CONDITION: f64 = 1e-10;

/// Strictly increasing positive depth hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypothesisSet {
    depths: Vec<f64>,
}

impl DepthHypothesisSet {
    pub fn new(depths: Vec<f64>) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::invalid("no depth hypotheses"));
        }
        if depths.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("depth hypotheses must be positive"));
        }
        if depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "depth hypotheses must be strictly increasing",
            ));
        }
        Ok(Self { depths })
    }

    /// `count` depths uniformly spaced in inverse depth over `[min, max]`.
    pub fn inverse_uniform(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max > min) || count < 2 {
            return Err(Error::invalid("need 0 < min < max and count >= 2"));
        }
        let (a, b) = (1.0 / max, 1.0 / min);
        let mut depths: Vec<f64> = (0..count)
            .map(|i| 1.0 / (a + (b - a) * i as f64 / (count - 1) as f64))
            .collect();
        depths.reverse();
        depths[0] = min;
        depths[count - 1] = max;
        Self::new(depths)
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.depths[0], self.depths[self.depths.len() - 1])
    }

    /// The equivalent fronto-parallel plane hypotheses `(0, 0, -1/d)`.
    pub fn to_grid(&self) -> Result<HypothesisGrid> {
        HypothesisGrid::from_hypotheses(
            self.depths
                .iter()
                .map(|d| PlaneParam::fronto(*d))
                .collect::<Result<_>>()?,
        )
    }
}

impl Default for DepthHypothesisSet {
    fn default() -> Self {
        Self::inverse_uniform(0.25, 10.0, 128).expect("default depth range is valid")
    }
}

/// Result of [`fronto_sweep`].
#[derive(Debug, Clone)]
pub struct FrontoOutput {
    pub depth: DepthMap,
    pub coarse: DepthMap,
    pub probability: ProbabilityVolume,
}

/// Depth sweep over fronto-parallel planes with the slanted sweep's machinery;
/// per-pixel depth is the probability-weighted mean of the hypotheses.
pub fn fronto_sweep(
    pair: &StereoPair<'_>,
    depths: &DepthHypothesisSet,
    config: &SweepConfig,
) -> Result<FrontoOutput> {
    let grid = depths.to_grid()?;
    let probability = probability_volume(pair, &grid, config)?;
    let expected = probability.expectation(depths.depths())?;
    let (w, h) = expected.dims();
    let values = expected.map(|d| d.unwrap_or(0.0));
    let valid = expected.map(|d| d.is_some());
    let coarse = DepthMap::new(values.clone(), valid.clone())?;
    let weights = ConvexWeights::bilinear(config.upsample_factor, w, h)?;
    let (fine, fine_valid) = convex_combine(&values, &valid, &weights, 0.0)?;
    Ok(FrontoOutput {
        depth: DepthMap::new(fine, fine_valid)?,
        coarse,
        probability,
    })
}

/// Least-squares plane `p` minimizing `sum (p^T X_i + 1)^2` over back-projected
/// foreground pixels with valid depth.
pub fn fit_plane_lsq(
    depth: &DepthMap,
    mask: &SoftMask,
    k: &CameraIntrinsics,
    grid: &PixelGrid,
) -> Result<PlaneParam> {
    depth.values().check_dims(grid.dims())?;
    mask.values().check_dims(grid.dims())?;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let mut n = 0usize;
    for (u, v, d) in depth.iter_valid() {
        if !mask.is_foreground(u, v) {
            continue;
        }
        let x = k.ray(u as f64, v as f64) * d;
        ata += x * x.transpose();
        atb -= x;
        n += 1;
    }
    fit_normal_equations(&ata, &atb, n)
}

/// Plane fit from an explicit point list.
pub fn fit_plane_points(points: &[Vector3<f64>]) -> Result<PlaneParam> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for x in points {
        ata += x * x.transpose();
        atb -= x;
    }
    fit_normal_equations(&ata, &atb, points.len())
}

fn fit_normal_equations(ata: &Matrix3<f64>, atb: &Vector3<f64>, n: usize) -> Result<PlaneParam> {
    if n < 3 {
        return Err(Error::DegeneratePlaneFit);
    }
    let eig = ata.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= FIT_CONDITION * hi {
        return Err(Error::DegeneratePlaneFit);
    }
    let p = ata.cholesky().ok_or(Error::DegeneratePlaneFit)?.solve(atb);
    PlaneParam(p)
        .validate()
        .map_err(|_| Error::DegeneratePlaneFit)?;
    Ok(PlaneParam(p))
}

/// Fits a plane per instance mask and returns the fitted parameters.
pub fn fit_instances(
    depth: &DepthMap,
    masks: &[SoftMask],
    k: &CameraIntrinsics,
) -> Vec<Result<PlaneParam>> {
    let grid = PixelGrid::new(depth.width(), depth.height());
    masks
        .iter()
        .map(|m| fit_plane_lsq(depth, m, k, &grid))
        .collect()
}
