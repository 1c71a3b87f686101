//! Convex-combination upsampling over 3x3 coarse neighborhoods.
//!
//! Fine pixel `(U, V)` belongs to coarse cell `(U / s, V / s)`; its value is
//! a weighted sum over that cell's 3x3 neighborhood, stencil index
//! `(dy + 1) * 3 + (dx + 1)`. Neighbors past the border reuse the nearest
//! edge cell.

use std::ops::{Add, Mul};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

use super::volume::PlaneParamMap;

const STENCIL_TOL: f64 = 1e-6;

/// One 3x3 stencil per fine pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexWeights {
    factor: usize,
    coarse_width: usize,
    coarse_height: usize,
    weights: Vec<[f64; 9]>,
}

impl ConvexWeights {
    /// Validates non-negativity and unit stencil sums.
    pub fn new(
        factor: usize,
        coarse_width: usize,
        coarse_height: usize,
        weights: Vec<[f64; 9]>,
    ) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be positive"));
        }
        if weights.len() != coarse_width * coarse_height * factor * factor {
            return Err(Error::invalid(
                "weight field does not match fine resolution",
            ));
        }
        for (i, st) in weights.iter().enumerate() {
            let sum: f64 = st.iter().sum();
            if st.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > STENCIL_TOL {
                return Err(Error::invalid(format!(
                    "stencil {i} is not a convex combination (sum {sum})"
                )));
            }
        }
        Ok(Self {
            factor,
            coarse_width,
            coarse_height,
            weights,
        })
    }

    /// Stencils reproducing bilinear interpolation with edge clamping.
    pub fn bilinear(factor: usize, coarse_width: usize, coarse_height: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be positive"));
        }
        let (fw, fh) = (coarse_width * factor, coarse_height * factor);
        let axis = |fine: usize, cells: usize| -> [f64; 3] {
            let j = fine / factor;
            let pos = (fine as f64 + 0.5) / factor as f64 - 0.5;
            let pos = pos.clamp(0.0, (cells - 1) as f64);
            let mut w = [0.0; 3];
            let lo = pos.floor();
            let frac = pos - lo;
            for (k, wk) in w.iter_mut().enumerate() {
                let idx = j as f64 + k as f64 - 1.0;
                if idx == lo {
                    *wk += 1.0 - frac;
                } else if idx == lo + 1.0 {
                    *wk += frac;
                }
            }
            w
        };
        let mut weights = Vec::with_capacity(fw * fh);
        for v in 0..fh {
            let wy = axis(v, coarse_height);
            for u in 0..fw {
                let wx = axis(u, coarse_width);
                let mut st = [0.0; 9];
                for dy in 0..3 {
                    for dx in 0..3 {
                        st[dy * 3 + dx] = wy[dy] * wx[dx];
                    }
                }
                weights.push(st);
            }
        }
        Self::new(factor, coarse_width, coarse_height, weights)
    }

    /// All weight on the center cell (nearest-neighbor replication).
    pub fn nearest(factor: usize, coarse_width: usize, coarse_height: usize) -> Result<Self> {
        let mut st = [0.0; 9];
        st[4] = 1.0;
        let n = coarse_width * coarse_height * factor * factor;
        Self::new(factor, coarse_width, coarse_height, vec![st; n])
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn fine_dims(&self) -> (usize, usize) {
        (
            self.coarse_width * self.factor,
            self.coarse_height * self.factor,
        )
    }

    pub fn stencil(&self, u: usize, v: usize) -> &[f64; 9] {
        &self.weights[v * self.coarse_width * self.factor + u]
    }
}

/// Convex combination over a generic value raster.
///
/// Invalid neighbors are dropped and the remaining weights renormalized; a
/// fine pixel whose stencil mass lies entirely on invalid cells is invalid.
pub(crate) fn convex_combine<T>(
    values: &Raster<T>,
    valid: &Mask,
    weights: &ConvexWeights,
    zero: T,
) -> Result<(Raster<T>, Mask)>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    values.check_dims((weights.coarse_width, weights.coarse_height))?;
    let (cw, ch) = values.dims();
    let (fw, fh) = weights.fine_dims();
    let mut out = Raster::filled(fw, fh, zero);
    let mut out_valid = Raster::filled(fw, fh, false);
    for v in 0..fh {
        let cy = v / weights.factor;
        for u in 0..fw {
            let cx = u / weights.factor;
            let st = weights.stencil(u, v);
            let mut acc = zero;
            let mut mass = 0.0;
            let mut dropped = false;
            for dy in 0..3 {
                let ny = (cy + dy).saturating_sub(1).min(ch - 1);
                for dx in 0..3 {
                    let w = st[dy * 3 + dx];
                    if w == 0.0 {
                        continue;
                    }
                    let nx = (cx + dx).saturating_sub(1).min(cw - 1);
                    if *valid.get(nx, ny) {
                        acc = acc + *values.get(nx, ny) * w;
                        mass += w;
                    } else {
                        dropped = true;
                    }
                }
            }
            if mass > 0.0 {
                out.set(u, v, if dropped { acc * (1.0 / mass) } else { acc });
                out_valid.set(u, v, true);
            }
        }
    }
    Ok((out, out_valid))
}

/// Upsamples a plane-parameter map by `weights.factor()`.
pub fn convex_upsample(coarse: &PlaneParamMap, weights: &ConvexWeights) -> Result<PlaneParamMap> {
    let (params, valid) = convex_combine(
        coarse.params(),
        coarse.validity(),
        weights,
        Vector3::zeros(),
    )?;
    PlaneParamMap::new(params, valid)
}
