use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::induce_homography;
use crate::hypothesis::HypothesisGrid;
use crate::raster::{Mask, Raster};

use super::image::ImageRaster;
use super::warp::warp_source_to;
use super::StereoPair;

/// Windows whose intensity variance falls below this are treated as textureless.
pub const TEXTURELESS_VARIANCE: f64 = 1e-8;
/// Cost assigned to textureless windows.
pub const NEUTRAL_COST: f64 = 1.0;

/// Box sums over `(2r+1)^2` windows clipped to the raster, computed separably.
pub(crate) fn box_sum(values: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            rows[y * width + x] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi).map(|yy| rows[yy * width + x]).sum();
        }
    }
    out
}

/// Precomputed target-side window statistics for repeated ZNCC evaluation.
struct TargetStats {
    width: usize,
    height: usize,
    radius: usize,
    values: Vec<f64>,
    count: Vec<f64>,
    invalid: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl TargetStats {
    fn new(tgt: &ImageRaster, window: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "window must be odd and >= 1, got {window}"
            )));
        }
        let (width, height) = tgt.dims();
        let radius = window / 2;
        let values: Vec<f64> = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| {
                if tgt.is_valid(x, y) {
                    tgt.intensity(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        let invalid: Vec<f64> = tgt
            .validity()
            .iter()
            .map(|v| if *v { 0.0 } else { 1.0 })
            .collect();
        let ones = vec![1.0; values.len()];
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        Ok(Self {
            width,
            height,
            radius,
            count: box_sum(&ones, width, height, radius),
            invalid: box_sum(&invalid, width, height, radius),
            sum: box_sum(&values, width, height, radius),
            sum_sq: box_sum(&sq, width, height, radius),
            values,
        })
    }

    fn cost(&self, warped: &ImageRaster) -> Result<(Raster<f64>, Mask)> {
        warped.validity().check_dims((self.width, self.height))?;
        let (w, h, r) = (self.width, self.height, self.radius);
        let b: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                if warped.is_valid(x, y) {
                    warped.intensity(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        let b_invalid: Vec<f64> = warped
            .validity()
            .iter()
            .map(|v| if *v { 0.0 } else { 1.0 })
            .collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = b.iter().zip(&self.values).map(|(x, y)| x * y).collect();
        let s_b = box_sum(&b, w, h, r);
        let s_bb = box_sum(&bb, w, h, r);
        let s_ab = box_sum(&ab, w, h, r);
        let bad = box_sum(&b_invalid, w, h, r);

        let mut cost = Raster::filled(w, h, 0.0);
        let mut valid = Raster::filled(w, h, false);
        for i in 0..w * h {
            if self.invalid[i] > 0.0 || bad[i] > 0.0 {
                continue;
            }
            let n = self.count[i];
            let (ma, mb) = (self.sum[i] / n, s_b[i] / n);
            let va = self.sum_sq[i] / n - ma * ma;
            let vb = s_bb[i] / n - mb * mb;
            let c = if va < TEXTURELESS_VARIANCE || vb < TEXTURELESS_VARIANCE {
                NEUTRAL_COST
            } else {
                let zncc = ((s_ab[i] / n - ma * mb) / (va * vb).sqrt()).clamp(-1.0, 1.0);
                1.0 - zncc
            };
            cost.as_mut_slice()[i] = c;
            valid.as_mut_slice()[i] = true;
        }
        Ok((cost, valid))
    }
}

/// `1 - ZNCC` over an odd `window`, in `[0, 2]`.
///
/// Windows are clipped at the image border. A cell is invalid when any pixel
/// in its window is invalid in either image. Textureless windows (variance
/// below [`TEXTURELESS_VARIANCE`] in either image) get [`NEUTRAL_COST`].
pub fn matching_cost(
    tgt: &ImageRaster,
    warped: &ImageRaster,
    window: usize,
) -> Result<(Raster<f64>, Mask)> {
    if tgt.dims() != warped.dims() {
        return Err(Error::DimensionMismatch {
            expected: tgt.dims(),
            actual: warped.dims(),
        });
    }
    TargetStats::new(tgt, window)?.cost(warped)
}

/// `N x h x w` matching costs, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    count: usize,
    width: usize,
    height: usize,
    cost: Vec<f64>,
    valid: Vec<bool>,
}

impl CostVolume {
    pub fn new(
        count: usize,
        width: usize,
        height: usize,
        cost: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = count * width * height;
        if cost.len() != n || valid.len() != n {
            return Err(Error::invalid("cost volume buffers do not match shape"));
        }
        if cost.iter().zip(&valid).any(|(c, ok)| *ok && !c.is_finite()) {
            return Err(Error::invalid("valid costs must be finite"));
        }
        Ok(Self {
            count,
            width,
            height,
            cost,
            valid,
        })
    }

    fn from_slices(width: usize, height: usize, slices: Vec<(Raster<f64>, Mask)>) -> Self {
        let count = slices.len();
        let mut cost = Vec::with_capacity(count * width * height);
        let mut valid = Vec::with_capacity(count * width * height);
        for (c, v) in slices {
            cost.extend(c.into_vec());
            valid.extend(v.into_vec());
        }
        Self {
            count,
            width,
            height,
            cost,
            valid,
        }
    }

    /// `(N, h, w)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.count, self.height, self.width)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.cost[j * n..(j + 1) * n]
    }

    pub fn slice_validity(&self, j: usize) -> &[bool] {
        let n = self.width * self.height;
        &self.valid[j * n..(j + 1) * n]
    }

    #[inline]
    pub fn get(&self, j: usize, x: usize, y: usize) -> Option<f64> {
        let i = (j * self.height + y) * self.width + x;
        self.valid[i].then_some(self.cost[i])
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
}

/// Stacks `matching_cost(tgt, warp(src, H_j))` over all hypotheses.
///
/// Images and intrinsics are first reduced by `scale`, so the volume has shape
/// `(N, H / scale, W / scale)`.
pub fn build_cost_volume(
    pair: &StereoPair<'_>,
    grid: &HypothesisGrid,
    window: usize,
    scale: usize,
) -> Result<CostVolume> {
    pair.validate()?;
    let tgt = pair.target.to_gray().downsample(scale)?;
    let src = pair.source.to_gray().downsample(scale)?;
    let k_tgt = pair.k_target.downscaled(scale)?;
    let k_src = pair.k_source.downscaled(scale)?;
    let stats = TargetStats::new(&tgt, window)?;
    let (w, h) = tgt.dims();
    let slices = grid
        .hypotheses()
        .par_iter()
        .map(|p| {
            let hom = induce_homography(p, pair.pose, &k_tgt, &k_src)?;
            let warped = warp_source_to(&src, &hom, w, h);
            stats.cost(&warped)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostVolume::from_slices(w, h, slices))
}

/// Per-slice masked box mean of radius `radius`.
///
/// Invalid cells are excluded from every average and stay invalid.
pub fn aggregate_cost(vol: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return vol.clone();
    }
    let (w, h) = (vol.width, vol.height);
    let slices: Vec<(Raster<f64>, Mask)> = (0..vol.count)
        .into_par_iter()
        .map(|j| {
            let c = vol.slice(j);
            let v = vol.slice_validity(j);
            let masked: Vec<f64> = c
                .iter()
                .zip(v)
                .map(|(c, ok)| if *ok { *c } else { 0.0 })
                .collect();
            let ind: Vec<f64> = v.iter().map(|ok| if *ok { 1.0 } else { 0.0 }).collect();
            let sums = box_sum(&masked, w, h, radius);
            let counts = box_sum(&ind, w, h, radius);
            let out: Vec<f64> = (0..w * h)
                .map(|i| if v[i] { sums[i] / counts[i] } else { 0.0 })
                .collect();
            (
                Raster::from_vec(w, h, out).expect("shape"),
                Raster::from_vec(w, h, v.to_vec()).expect("shape"),
            )
        })
        .collect();
    CostVolume::from_slices(w, h, slices)
}

/// Invalidates every slice at pixels where fewer than `min_fraction` of the
/// slices are valid.
///
/// Near the image border the true hypothesis often warps out of the source
/// while wrong ones stay in view; dropping such pixels keeps them from
/// voting for the survivors.
pub fn drop_low_support(vol: &CostVolume, min_fraction: f64) -> CostVolume {
    let mut out = vol.clone();
    if min_fraction <= 0.0 {
        return out;
    }
    let plane = vol.width * vol.height;
    let need = min_fraction * vol.count as f64;
    for i in 0..plane {
        let n = (0..vol.count).filter(|j| vol.valid[j * plane + i]).count();
        if (n as f64) < need {
            for j in 0..vol.count {
                out.valid[j * plane + i] = false;
            }
        }
    }
    out
}
