//! Instance soft pooling, planar depth stitching and region-growing segmentation.

use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{plane_to_depth, CameraIntrinsics, DepthMap, PixelGrid, PlaneParam, RAY_EPS};
use crate::raster::{Mask, Raster};
use crate::sweep::PlaneParamMap;

/// Foreground threshold; a pixel is foreground when `sigma > 0.5`.
pub const FOREGROUND_THRESHOLD: f64 = 0.5;

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Raster<f64>);

impl SoftMask {
    pub fn new(values: Raster<f64>) -> Result<Self> {
        if values.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("mask values must lie in [0, 1]"));
        }
        Ok(Self(values))
    }

    pub fn from_binary(mask: &Mask) -> Self {
        Self(mask.map(|b| if *b { 1.0 } else { 0.0 }))
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self(Raster::filled(width, height, 1.0))
    }

    pub fn values(&self) -> &Raster<f64> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn sigma(&self, x: usize, y: usize) -> f64 {
        *self.0.get(x, y)
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.sigma(x, y) > FOREGROUND_THRESHOLD
    }

    pub fn foreground(&self) -> Mask {
        self.0.map(|s| *s > FOREGROUND_THRESHOLD)
    }

    pub fn area(&self) -> usize {
        self.0.iter().filter(|s| **s > FOREGROUND_THRESHOLD).count()
    }
}

/// A detected or ground-truth plane instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneInstance {
    pub mask: SoftMask,
    pub score: f64,
    pub semantic_label: Option<u32>,
    pub pooled_param: Option<PlaneParam>,
}

impl PlaneInstance {
    pub fn new(mask: SoftMask, score: f64) -> Result<Self> {
        if !(score > 0.0 && score < 1.0) {
            return Err(Error::invalid(format!(
                "score must be in (0, 1), got {score}"
            )));
        }
        Ok(Self {
            mask,
            score,
            semantic_label: None,
            pooled_param: None,
        })
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.semantic_label = Some(label);
        self
    }
}

/// Instances of one target image; all masks share dimensions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlaneInstanceSet {
    instances: Vec<PlaneInstance>,
}

impl PlaneInstanceSet {
    pub fn new(instances: Vec<PlaneInstance>) -> Result<Self> {
        if let Some(first) = instances.first() {
            let dims = first.mask.dims();
            for inst in &instances {
                inst.mask.values().check_dims(dims)?;
            }
        }
        Ok(Self { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PlaneInstance> {
        self.instances.iter()
    }

    pub fn instances(&self) -> &[PlaneInstance] {
        &self.instances
    }

    pub fn into_vec(self) -> Vec<PlaneInstance> {
        self.instances
    }

    /// Like [`pool`](Self::pool), but drops instances with no valid support
    /// in `param_map` instead of failing. Returns how many were dropped.
    pub fn pool_supported(&mut self, param_map: &PlaneParamMap) -> Result<usize> {
        let before = self.instances.len();
        let mut kept = Vec::with_capacity(before);
        for mut inst in self.instances.drain(..) {
            match soft_pool(param_map, &inst.mask) {
                Ok(p) => {
                    inst.pooled_param = Some(p);
                    kept.push(inst);
                }
                Err(Error::EmptyInstance) => {}
                Err(e) => return Err(e),
            }
        }
        self.instances = kept;
        Ok(before - self.instances.len())
    }

    /// Soft-pools `param_map` into every instance.
    pub fn pool(&mut self, param_map: &PlaneParamMap) -> Result<()> {
        for inst in &mut self.instances {
            inst.pooled_param = Some(soft_pool(param_map, &inst.mask)?);
        }
        Ok(())
    }
}

/// `sum(sigma_i p_i) / sum(sigma_i)` over pixels valid in `param_map`.
pub fn soft_pool(param_map: &PlaneParamMap, mask: &SoftMask) -> Result<PlaneParam> {
    mask.values().check_dims(param_map.dims())?;
    let mut acc = Vector3::zeros();
    let mut mass = 0.0;
    for (x, y, p) in param_map.iter_valid() {
        let s = mask.sigma(x, y);
        if s > 0.0 {
            acc += p.0 * s;
            mass += s;
        }
    }
    if mass <= 0.0 {
        return Err(Error::EmptyInstance);
    }
    let p = PlaneParam(acc / mass);
    p.validate()?;
    Ok(p)
}

/// Planar depth of `p` restricted to foreground pixels of `mask`.
pub fn instance_depth(
    p: &PlaneParam,
    mask: &SoftMask,
    k: &CameraIntrinsics,
    grid: &PixelGrid,
) -> Result<DepthMap> {
    mask.values().check_dims(grid.dims())?;
    let mut depth = plane_to_depth(p, k, grid);
    for v in 0..grid.height {
        for u in 0..grid.width {
            if !mask.is_foreground(u, v) {
                depth.set(u, v, None);
            }
        }
    }
    Ok(depth)
}

/// Depth implied by each pixel's own plane parameter.
pub fn pixel_planar_depth(param_map: &PlaneParamMap, k: &CameraIntrinsics) -> DepthMap {
    let (w, h) = param_map.dims();
    let mut out = DepthMap::invalid(w, h);
    for (u, v, p) in param_map.iter_valid() {
        let denom = p.0.dot(&k.ray(u as f64, v as f64));
        if denom < -RAY_EPS {
            out.set(u, v, Some(-1.0 / denom));
        }
    }
    out
}

/// Stitches instance depths over per-pixel planar depth.
///
/// Foreground pixels take the depth of the highest-scoring claiming instance
/// (earlier instances win exact ties); all other pixels, and claimed pixels
/// whose instance plane misses the ray, use their per-pixel parameter.
pub fn stitch_depth(
    instances: &PlaneInstanceSet,
    param_map: &PlaneParamMap,
    k: &CameraIntrinsics,
    grid: &PixelGrid,
) -> Result<DepthMap> {
    param_map.validity().check_dims(grid.dims())?;
    let pooled: Vec<PlaneParam> = instances
        .iter()
        .map(|i| {
            i.pooled_param
                .ok_or_else(|| Error::invalid("instance has no pooled parameter"))
        })
        .collect::<Result<_>>()?;
    for inst in instances.iter() {
        inst.mask.values().check_dims(grid.dims())?;
    }
    let mut out = pixel_planar_depth(param_map, k);
    for v in 0..grid.height {
        for u in 0..grid.width {
            let mut best: Option<usize> = None;
            for (i, inst) in instances.iter().enumerate() {
                if inst.mask.is_foreground(u, v)
                    && best.is_none_or(|b| inst.score > instances.instances[b].score)
                {
                    best = Some(i);
                }
            }
            if let Some(b) = best {
                if let Some(d) = pooled[b].depth_along(&k.ray(u as f64, v as f64)) {
                    out.set(u, v, Some(d));
                }
            }
        }
    }
    Ok(out)
}

/// Mean absolute depth difference over jointly valid pixels.
pub fn soft_pooling_loss(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    gt.values().check_dims(pred.dims())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y, d) in pred.iter_valid() {
        if let Some(g) = gt.get(x, y) {
            sum += (d - g).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(sum / n as f64)
}

/// Region-growing tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    pub angle_tol_deg: f64,
    /// Allowed difference of `|p| = 1 / |e|`, in 1/m.
    pub offset_tol: f64,
    /// Minimum region size as a fraction of all pixels.
    pub min_area_fraction: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            angle_tol_deg: 10.0,
            offset_tol: 0.1,
            min_area_fraction: 0.005,
        }
    }
}

impl SegmentConfig {
    pub fn min_area(&self, width: usize, height: usize) -> usize {
        ((width * height) as f64 * self.min_area_fraction).ceil() as usize
    }
}

/// Greedy 4-connected region growing over plane parameters.
///
/// A neighbor joins a region when its normal is within `angle_tol_deg` of the
/// region's mean normal and its inverse offset `|p|` is within `offset_tol` of
/// the region mean. Regions smaller than `min_area` pixels are dropped. Masks
/// are binary and scores are area fractions clamped into `(0, 1)`.
pub fn segment_planes(
    param_map: &PlaneParamMap,
    angle_tol_deg: f64,
    offset_tol: f64,
    min_area: usize,
) -> PlaneInstanceSet {
    let (w, h) = param_map.dims();
    let cos_tol = angle_tol_deg.to_radians().cos();
    let mut visited = Raster::filled(w, h, false);
    let mut instances = Vec::new();
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if *visited.get(sx, sy) || param_map.get(sx, sy).is_none() {
                continue;
            }
            let mut region = Raster::filled(w, h, false);
            let mut sum = Vector3::zeros();
            let mut area = 0usize;
            visited.set(sx, sy, true);
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                let p = param_map.get(x, y).expect("queued pixels are valid").0;
                sum += p;
                area += 1;
                region.set(x, y, true);
                let mean = sum / area as f64;
                let (mean_n, mean_mag) = (mean.normalize(), mean.norm());
                let neighbors = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for (nx, ny) in neighbors {
                    if nx >= w || ny >= h || *visited.get(nx, ny) {
                        continue;
                    }
                    let Some(q) = param_map.get(nx, ny) else {
                        continue;
                    };
                    let cos = q.0.normalize().dot(&mean_n);
                    if cos >= cos_tol && (q.0.norm() - mean_mag).abs() <= offset_tol {
                        visited.set(nx, ny, true);
                        queue.push_back((nx, ny));
                    }
                }
            }
            if area >= min_area.max(1) {
                let score = (area as f64 / (w * h) as f64).clamp(1e-6, 1.0 - 1e-6);
                instances.push(PlaneInstance {
                    mask: SoftMask::from_binary(&region),
                    score,
                    semantic_label: None,
                    pooled_param: None,
                });
            }
        }
    }
    PlaneInstanceSet { instances }
}
