//! Slanted plane hypothesis grids and data-driven bound selection.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlaneParam;

/// Width used to widen a degenerate (zero-length) axis range.
pub const DEGENERATE_HALF_WIDTH: f64 = 1e-3;

/// Inclusive sampling range for one component of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let r = Self { lo, hi, count };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::invalid(format!(
                "axis range needs lo < hi, got ({}, {})",
                self.lo, self.hi
            )));
        }
        if self.count < 2 {
            return Err(Error::invalid(format!(
                "axis needs at least 2 samples, got {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    /// The `i`-th sample; the last one is exactly `hi`.
    pub fn sample(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + self.spacing() * i as f64
        }
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.sample(i)).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Default per-axis bounds `(-2, 2), (-2, 2), (-2, 0.5)` with 8 samples each.
pub fn default_ranges() -> [AxisRange; 3] {
    [
        AxisRange {
            lo: -2.0,
            hi: 2.0,
            count: 8,
        },
        AxisRange {
            lo: -2.0,
            hi: 2.0,
            count: 8,
        },
        AxisRange {
            lo: -2.0,
            hi: 0.5,
            count: 8,
        },
    ]
}

/// Ordered set of plane hypotheses.
///
/// Regular grids enumerate `x`, then `y`, then `z` with `z` varying fastest.
/// Arbitrary lists (for example fronto-parallel depth sets) carry their
/// axis-aligned bounding box instead of sampling ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid {
    ranges: Option<[AxisRange; 3]>,
    hypotheses: Vec<PlaneParam>,
}

impl HypothesisGrid {
    pub fn new(ranges: [AxisRange; 3]) -> Result<Self> {
        build_grid(ranges)
    }

    /// Uses an explicit hypothesis list.
    pub fn from_hypotheses(hypotheses: Vec<PlaneParam>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::invalid("hypothesis list is empty"));
        }
        for p in &hypotheses {
            p.validate()?;
        }
        Ok(Self {
            ranges: None,
            hypotheses,
        })
    }

    pub fn ranges(&self) -> Option<&[AxisRange; 3]> {
        self.ranges.as_ref()
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[PlaneParam] {
        &self.hypotheses
    }

    pub fn get(&self, j: usize) -> &PlaneParam {
        &self.hypotheses[j]
    }

    /// Per-axis `(min, max)` over all hypotheses.
    pub fn bounding_box(&self) -> [(f64, f64); 3] {
        let mut bb = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for p in &self.hypotheses {
            for (a, b) in bb.iter_mut().enumerate() {
                b.0 = b.0.min(p.0[a]);
                b.1 = b.1.max(p.0[a]);
            }
        }
        bb
    }

    /// Per-axis cell spacing for regular grids.
    pub fn spacing(&self) -> Option<[f64; 3]> {
        self.ranges
            .map(|r| [r[0].spacing(), r[1].spacing(), r[2].spacing()])
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.hypotheses.iter().map(|p| p.0).sum();
        sum / self.hypotheses.len() as f64
    }
}

impl Default for HypothesisGrid {
    fn default() -> Self {
        build_grid(default_ranges()).expect("default ranges are valid")
    }
}

/// Uniform inclusive grid over three axis ranges.
pub fn build_grid(ranges: [AxisRange; 3]) -> Result<HypothesisGrid> {
    for r in &ranges {
        r.validate()?;
    }
    let [xs, ys, zs] = [
        ranges[0].samples(),
        ranges[1].samples(),
        ranges[2].samples(),
    ];
    let mut hypotheses = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                // A sample exactly at the origin is not a plane; nudge it.
                let v = if x == 0.0 && y == 0.0 && z == 0.0 {
                    Vector3::new(0.0, 0.0, f64::MIN_POSITIVE)
                } else {
                    Vector3::new(x, y, z)
                };
                hypotheses.push(PlaneParam(v));
            }
        }
    }
    Ok(HypothesisGrid {
        ranges: Some(ranges),
        hypotheses,
    })
}

/// Symmetric-quantile bounds holding at least `coverage` of the samples per axis.
///
/// For `n` samples, `floor(n (1 - coverage) / 2)` order statistics are trimmed
/// from each end. Axes whose trimmed range collapses to a point are widened to
/// `v +/- 1e-3`.
pub fn select_bounds(
    samples: &[PlaneParam],
    coverage: f64,
    counts: [usize; 3],
) -> Result<[AxisRange; 3]> {
    if samples.is_empty() {
        return Err(Error::invalid("no plane samples"));
    }
    if samples.len() < 2 {
        return Err(Error::invalid("need at least 2 plane samples"));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::invalid(format!(
            "coverage must be in (0, 1), got {coverage}"
        )));
    }
    let n = samples.len();
    let trim = ((n as f64) * (1.0 - coverage) / 2.0).floor() as usize;
    let mut out = default_ranges();
    for axis in 0..3 {
        let mut vals: Vec<f64> = samples.iter().map(|p| p.0[axis]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite plane sample"));
        }
        vals.sort_by(f64::total_cmp);
        let (mut lo, mut hi) = (vals[trim], vals[n - 1 - trim]);
        if hi <= lo {
            let v = lo;
            lo = v - DEGENERATE_HALF_WIDTH;
            hi = v + DEGENERATE_HALF_WIDTH;
        }
        out[axis] = AxisRange::new(lo, hi, counts[axis])?;
    }
    Ok(out)
}

/// Fraction of samples inside the grid bounds, per axis.
pub fn grid_coverage(grid: &HypothesisGrid, samples: &[PlaneParam]) -> Result<[f64; 3]> {
    if samples.is_empty() {
        return Err(Error::invalid("no plane samples"));
    }
    let bounds = grid.bounding_box();
    let mut cov = [0.0; 3];
    for (axis, c) in cov.iter_mut().enumerate() {
        let (lo, hi) = bounds[axis];
        let inside = samples
            .iter()
            .filter(|p| p.0[axis] >= lo && p.0[axis] <= hi)
            .count();
        *c = inside as f64 / samples.len() as f64;
    }
    Ok(cov)
}
