//! Cameras, plane parameters, homographies and plane/depth conversion.
//!
//! Conventions used throughout the crate:
//!
//! * Integer pixel coordinates address pixel *centers*; pixel `(u, v)` covers
//!   `[u - 0.5, u + 0.5) x [v - 0.5, v + 0.5)`.
//! * A plane is `n^T X + e = 0` in the target camera frame and is stored as
//!   `p = n / e`, so every point on it satisfies `p^T X = -1`. For planes in
//!   front of the camera with `n` oriented along `+z`, `e < 0`.
//! * [`RelativePose`] maps target-frame points into the source frame:
//!   `X_src = R X_tgt + t`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

const ORTHO_TOL: f64 = 1e-9;
/// Rays with `p^T K^-1 x` at or above this value do not hit the plane in front.
pub const RAY_EPS: f64 = 1e-12;

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid("focal lengths must be finite and positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be non-zero"));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::invalid("principal point outside the image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Closed-form inverse of [`Self::matrix`].
    pub fn inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K^-1 (u, v, 1)`, a ray with unit z component.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn project(&self, x: &Vector3<f64>) -> (f64, f64) {
        (self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy)
    }

    /// Intrinsics of the image obtained by averaging `factor x factor` pixel blocks.
    pub fn downscaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor)
        {
            return Err(Error::invalid(format!(
                "image {}x{} is not divisible by scale {factor}",
                self.width, self.height
            )));
        }
        let s = factor as f64;
        Self::new(
            self.fx / s,
            self.fy / s,
            (self.cx + 0.5) / s - 0.5,
            (self.cy + 0.5) / s - 0.5,
            self.width / factor,
            self.height / factor,
        )
    }

    pub fn pixel_grid(&self) -> PixelGrid {
        PixelGrid::new(self.width, self.height)
    }
}

/// Rigid transform from the target camera frame into the source camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("pose has non-finite entries"));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if ortho > ORTHO_TOL || (self.rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid("rotation is not orthonormal with det 1"));
        }
        Ok(())
    }

    /// Pose taking target points through `self` and then through `next`.
    pub fn then(&self, next: &RelativePose) -> RelativePose {
        RelativePose {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    pub fn inverse(&self) -> RelativePose {
        let rt = self.rotation.transpose();
        RelativePose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn baseline(&self) -> f64 {
        self.translation.norm()
    }
}

/// A plane stored as `p = n / e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParam(pub Vector3<f64>);

impl PlaneParam {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Self(Vector3::new(x, y, z));
        p.validate()?;
        Ok(p)
    }

    pub fn from_normal_offset(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        if offset == 0.0 || !offset.is_finite() {
            return Err(Error::InvalidPlane);
        }
        let p = Self(normal / offset);
        p.validate()?;
        Ok(p)
    }

    /// Fronto-parallel plane `z = depth`.
    pub fn fronto(depth: f64) -> Result<Self> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::InvalidPlane);
        }
        Ok(Self(Vector3::new(0.0, 0.0, -1.0 / depth)))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.0.iter().all(|v| v.is_finite()) || self.0.norm() == 0.0 {
            return Err(Error::InvalidPlane);
        }
        Ok(())
    }

    #[inline]
    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Unit normal oriented so that the offset is negative.
    pub fn normal(&self) -> Vector3<f64> {
        self.0.normalize()
    }

    /// Signed offset `e` matching [`Self::normal`]; always negative.
    pub fn offset(&self) -> f64 {
        -1.0 / self.0.norm()
    }

    /// Distance-along-z of the plane through the given ray, if it lies in front.
    #[inline]
    pub fn depth_along(&self, ray: &Vector3<f64>) -> Option<f64> {
        let denom = self.0.dot(ray);
        if denom >= -RAY_EPS {
            None
        } else {
            Some(-1.0 / denom * ray.z)
        }
    }

    /// The same plane expressed in the source frame of `pose`.
    pub fn transformed(&self, pose: &RelativePose) -> Result<PlaneParam> {
        let rp = pose.rotation * self.0;
        let denom = 1.0 - rp.dot(&pose.translation);
        if denom.abs() < RAY_EPS {
            return Err(Error::InvalidPlane);
        }
        let p = PlaneParam(rp / denom);
        p.validate()?;
        Ok(p)
    }
}

/// A 3x3 homography normalized so that `H[2][2] = 1` whenever possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let h22 = m[(2, 2)];
        if h22.abs() > 1e-12 {
            Self(m / h22)
        } else {
            Self(m)
        }
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a target pixel to the source image; `None` at the line at infinity.
    #[inline]
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let m = &self.0;
        let w = m[(2, 0)] * u + m[(2, 1)] * v + m[(2, 2)];
        if w.abs() < 1e-12 {
            return None;
        }
        Some((
            (m[(0, 0)] * u + m[(0, 1)] * v + m[(0, 2)]) / w,
            (m[(1, 0)] * u + m[(1, 1)] * v + m[(1, 2)]) / w,
        ))
    }
}

/// Homography mapping target pixels to source pixels for points on plane `p`:
/// `K_src (R - t p^T) K_tgt^-1`.
pub fn induce_homography(
    p: &PlaneParam,
    pose: &RelativePose,
    k_tgt: &CameraIntrinsics,
    k_src: &CameraIntrinsics,
) -> Result<Homography> {
    p.validate()?;
    let m = k_src.matrix() * (pose.rotation - pose.translation * p.0.transpose()) * k_tgt.inverse();
    Ok(Homography::from_matrix(m))
}

/// Homogeneous pixel-center coordinates for a `width x height` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    #[inline]
    pub fn homogeneous(&self, u: usize, v: usize) -> Vector3<f64> {
        Vector3::new(u as f64, v as f64, 1.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Dense depth raster with explicit validity.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Raster<f64>,
    valid: Raster<bool>,
}

impl DepthMap {
    /// Builds a map whose valid cells are exactly the finite positive values.
    pub fn from_values(values: Raster<f64>) -> Self {
        let valid = values.map(|d| d.is_finite() && *d > 0.0);
        let values = Raster::from_fn(values.width(), values.height(), |x, y| {
            if *valid.get(x, y) {
                *values.get(x, y)
            } else {
                0.0
            }
        });
        Self { values, valid }
    }

    pub fn new(values: Raster<f64>, valid: Raster<bool>) -> Result<Self> {
        valid.check_dims(values.dims())?;
        for (d, ok) in values.iter().zip(valid.iter()) {
            if *ok && !(d.is_finite() && *d > 0.0) {
                return Err(Error::invalid("valid depth must be finite and positive"));
            }
        }
        Ok(Self { values, valid })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            values: Raster::filled(width, height, 0.0),
            valid: Raster::filled(width, height, false),
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if *self.valid.get(x, y) {
            Some(*self.values.get(x, y))
        } else {
            None
        }
    }

    pub fn set(&mut self, x: usize, y: usize, depth: Option<f64>) {
        match depth {
            Some(d) if d.is_finite() && d > 0.0 => {
                self.values.set(x, y, d);
                self.valid.set(x, y, true);
            }
            _ => {
                self.values.set(x, y, 0.0);
                self.valid.set(x, y, false);
            }
        }
    }

    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }

    pub fn validity(&self) -> &Raster<bool> {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterates `(x, y, depth)` over valid pixels.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width();
        self.values
            .iter()
            .zip(self.valid.iter())
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(move |(i, (d, _))| (i % w, i / w, *d))
    }
}

/// Per-pixel depth of plane `p`: `-1 / (p^T K^-1 x)`.
pub fn plane_to_depth(p: &PlaneParam, k: &CameraIntrinsics, grid: &PixelGrid) -> DepthMap {
    let mut out = DepthMap::invalid(grid.width, grid.height);
    let kinv = k.inverse();
    for v in 0..grid.height {
        for u in 0..grid.width {
            let denom = p.0.dot(&(kinv * grid.homogeneous(u, v)));
            if denom < -RAY_EPS {
                out.set(u, v, Some(-1.0 / denom));
            }
        }
    }
    out
}

/// Back-projects a pixel at the given depth: `depth * K^-1 x`.
pub fn depth_to_point(k: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid("depth must be positive"));
    }
    Ok(k.ray(u, v) * depth)
}
