use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PlaneParam;
use crate::hypothesis::HypothesisGrid;
use crate::raster::{Mask, Raster};

use super::cost::CostVolume;

/// Per-pixel distribution over hypotheses, slice-major like [`CostVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    count: usize,
    width: usize,
    height: usize,
    prob: Vec<f64>,
    valid: Mask,
}

impl ProbabilityVolume {
    /// Wraps raw probabilities; every valid pixel must sum to 1 within 1e-6.
    pub fn new(
        count: usize,
        width: usize,
        height: usize,
        prob: Vec<f64>,
        valid: Mask,
    ) -> Result<Self> {
        if prob.len() != count * width * height {
            return Err(Error::invalid("probability buffer does not match shape"));
        }
        valid.check_dims((width, height))?;
        let vol = Self {
            count,
            width,
            height,
            prob,
            valid,
        };
        for y in 0..height {
            for x in 0..width {
                if !*vol.valid.get(x, y) {
                    continue;
                }
                let mut sum = 0.0;
                for j in 0..count {
                    let p = vol.get(j, x, y);
                    if !(p >= 0.0) {
                        return Err(Error::invalid("negative or NaN probability"));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!("pixel ({x}, {y}) sums to {sum}")));
                }
            }
        }
        Ok(vol)
    }

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

    #[inline]
    pub fn get(&self, j: usize, x: usize, y: usize) -> f64 {
        self.prob[(j * self.height + y) * self.width + x]
    }

    pub fn validity(&self) -> &Mask {
        &self.valid
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    /// Probability-weighted mean of arbitrary per-hypothesis scalars.
    pub fn expectation(&self, values: &[f64]) -> Result<Raster<Option<f64>>> {
        if values.len() != self.count {
            return Err(Error::invalid("one value per hypothesis required"));
        }
        Ok(Raster::from_fn(self.width, self.height, |x, y| {
            self.valid
                .get(x, y)
                .then(|| (0..self.count).map(|j| self.get(j, x, y) * values[j]).sum())
        }))
    }
}

/// Softmax of `-cost / temperature` across hypotheses, ignoring invalid slices.
///
/// Pixels with no valid slice are invalid and carry all-zero probabilities.
pub fn cost_to_probability(vol: &CostVolume, temperature: f64) -> Result<ProbabilityVolume> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let (n, h, w) = vol.shape();
    let plane = w * h;
    let per_pixel: Vec<Option<Vec<f64>>> = (0..plane)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let costs: Vec<Option<f64>> = (0..n).map(|j| vol.get(j, x, y)).collect();
            let min = costs
                .iter()
                .flatten()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if !min.is_finite() {
                return None;
            }
            let mut e: Vec<f64> = costs
                .iter()
                .map(|c| c.map_or(0.0, |c| (-(c - min) / temperature).exp()))
                .collect();
            let z: f64 = e.iter().sum();
            e.iter_mut().for_each(|v| *v /= z);
            Some(e)
        })
        .collect();
    let mut prob = vec![0.0; n * plane];
    let mut valid = Raster::filled(w, h, false);
    for (i, p) in per_pixel.into_iter().enumerate() {
        if let Some(p) = p {
            for (j, v) in p.into_iter().enumerate() {
                prob[j * plane + i] = v;
            }
            valid.as_mut_slice()[i] = true;
        }
    }
    Ok(ProbabilityVolume {
        count: n,
        width: w,
        height: h,
        prob,
        valid,
    })
}

/// Dense raster of plane parameters with validity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneParamMap {
    params: Raster<Vector3<f64>>,
    valid: Mask,
}

impl PlaneParamMap {
    pub fn new(params: Raster<Vector3<f64>>, valid: Mask) -> Result<Self> {
        valid.check_dims(params.dims())?;
        let mut valid = valid;
        for (p, ok) in params.iter().zip(valid.as_mut_slice()) {
            if *ok && (PlaneParam(*p).validate().is_err()) {
                *ok = false;
            }
        }
        Ok(Self { params, valid })
    }

    /// Every pixel valid and equal to `p`.
    pub fn constant(width: usize, height: usize, p: PlaneParam) -> Self {
        Self {
            params: Raster::filled(width, height, p.0),
            valid: Raster::filled(width, height, true),
        }
    }

    pub fn width(&self) -> usize {
        self.params.width()
    }

    pub fn height(&self) -> usize {
        self.params.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.params.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<PlaneParam> {
        self.valid
            .get(x, y)
            .then(|| PlaneParam(*self.params.get(x, y)))
    }

    pub fn params(&self) -> &Raster<Vector3<f64>> {
        &self.params
    }

    pub fn validity(&self) -> &Mask {
        &self.valid
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, PlaneParam)> + '_ {
        let w = self.width();
        self.params
            .iter()
            .zip(self.valid.iter())
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(move |(i, (p, _))| (i % w, i / w, PlaneParam(*p)))
    }
}

/// Probability-weighted sum of hypotheses at every valid pixel.
pub fn soft_argmax(u: &ProbabilityVolume, grid: &HypothesisGrid) -> Result<PlaneParamMap> {
    if grid.len() != u.count {
        return Err(Error::invalid(format!(
            "volume has {} slices but grid has {} hypotheses",
            u.count,
            grid.len()
        )));
    }
    let (w, h) = (u.width, u.height);
    let mut params = Raster::filled(w, h, Vector3::zeros());
    for y in 0..h {
        for x in 0..w {
            if !*u.valid.get(x, y) {
                continue;
            }
            let mut acc = Vector3::zeros();
            for (j, p) in grid.hypotheses().iter().enumerate() {
                acc += p.0 * u.get(j, x, y);
            }
            params.set(x, y, acc);
        }
    }
    PlaneParamMap::new(params, u.valid.clone())
}
