//! Synthetic piecewise-planar scenes with exact ground truth.
//!
//! Planes carry a polygonal extent in 2D plane coordinates and a procedural
//! value-noise texture defined on the plane itself, so both views see the
//! same surface pattern. Rendering is a per-pixel ray cast at pixel centers.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, PlaneParam, RelativePose};
use crate::hypothesis::{default_ranges, AxisRange};
use crate::pooling::SoftMask;
use crate::raster::Raster;
use crate::sweep::{ImageRaster, PlaneParamMap};

/// Intensity of pixels that hit only the far background plane.
pub const BACKGROUND_INTENSITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    /// Value-noise lattice cells per meter for the base octave.
    pub frequency: f64,
    /// Constant per-plane intensity instead of noise.
    pub textureless: bool,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            frequency: 6.0,
            textureless: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlane {
    pub param: PlaneParam,
    /// Polygon vertices in the plane's 2D frame (see [`plane_frame`]).
    pub polygon: Vec<[f64; 2]>,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub planes: Vec<ScenePlane>,
    pub intrinsics: CameraIntrinsics,
    /// Source intrinsics; the target intrinsics are reused when absent.
    #[serde(default)]
    pub source_intrinsics: Option<CameraIntrinsics>,
    pub pose: RelativePose,
    /// Depth of the fronto-parallel background plane in the target frame.
    pub far_depth: f64,
    pub texture: TextureParams,
}

impl SceneSpec {
    pub fn source_intrinsics(&self) -> CameraIntrinsics {
        self.source_intrinsics.unwrap_or(self.intrinsics)
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::invalid("scene has no planes"));
        }
        self.intrinsics.validate()?;
        self.source_intrinsics().validate()?;
        self.pose.validate()?;
        if !(self.far_depth > 0.0 && self.far_depth.is_finite()) {
            return Err(Error::invalid("far depth must be positive"));
        }
        for plane in &self.planes {
            plane.param.validate()?;
            if plane.polygon.len() < 3 || polygon_area(&plane.polygon).abs() < 1e-12 {
                return Err(Error::invalid("degenerate plane polygon"));
            }
        }
        Ok(())
    }
}

/// Ground truth and images for one posed pair.
#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub target: ImageRaster,
    pub source: ImageRaster,
    pub depth: DepthMap,
    /// 0 for background, `j + 1` for plane `j`.
    pub instance_ids: Raster<u16>,
    pub params: Vec<PlaneParam>,
    pub far_depth: f64,
}

impl RenderedPair {
    /// Binary mask of every plane, in plane order.
    pub fn masks(&self) -> Vec<SoftMask> {
        (0..self.params.len())
            .map(|j| {
                let id = (j + 1) as u16;
                SoftMask::from_binary(&self.instance_ids.map(|v| *v == id))
            })
            .collect()
    }

    /// Per-pixel ground-truth plane parameters; background pixels get the far plane.
    pub fn param_map(&self) -> PlaneParamMap {
        let far = PlaneParam(Vector3::new(0.0, 0.0, -1.0 / self.far_depth));
        let params = self.instance_ids.map(|id| match *id {
            0 => far.0,
            j => self.params[j as usize - 1].0,
        });
        let (w, h) = params.dims();
        PlaneParamMap::new(params, Raster::filled(w, h, true)).expect("dims match")
    }

    /// Number of distinct planes with at least one visible target pixel.
    pub fn visible_planes(&self) -> usize {
        let mut seen = vec![false; self.params.len()];
        for id in self.instance_ids.iter().filter(|id| **id > 0) {
            seen[*id as usize - 1] = true;
        }
        seen.iter().filter(|s| **s).count()
    }
}

/// Origin and in-plane axes `(o, e1, e2)`; `o` is the point closest to the camera.
pub fn plane_frame(p: &PlaneParam) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let n = p.0.normalize();
    let origin = -p.0 / p.0.norm_squared();
    let helper = if n.y.abs() < 0.9 {
        Vector3::y()
    } else {
        Vector3::x()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (origin, e1, e2)
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[inline]
fn hash2(seed: u64, ix: i64, iy: i64) -> f64 {
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (fade(x - fx), fade(y - fy));
    let a = hash2(seed, ix, iy);
    let b = hash2(seed, ix + 1, iy);
    let c = hash2(seed, ix, iy + 1);
    let d = hash2(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

/// Texture intensity in `[0.1, 0.9]` at plane coordinates `(a, b)` meters.
pub fn texture_value(texture: &TextureParams, seed: u64, a: f64, b: f64) -> f64 {
    if texture.textureless {
        return 0.2 + 0.6 * hash2(seed, 0, 0);
    }
    let f = texture.frequency;
    let base = value_noise(seed, a * f, b * f);
    let detail = value_noise(seed ^ 0x5bd1_e995, a * f * 2.0, b * f * 2.0);
    0.1 + 0.8 * ((2.0 * base + detail) / 3.0)
}

struct PreparedPlane<'a> {
    plane: &'a ScenePlane,
    origin: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

impl PreparedPlane<'_> {
    fn coords(&self, x: &Vector3<f64>) -> (f64, f64) {
        let d = x - self.origin;
        (d.dot(&self.e1), d.dot(&self.e2))
    }
}

struct Hit {
    depth: f64,
    id: u16,
    intensity: f64,
}

fn cast(
    planes: &[PreparedPlane<'_>],
    view_params: &[PlaneParam],
    ray: &Vector3<f64>,
    to_target: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    texture: &TextureParams,
) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (j, (pp, vp)) in planes.iter().zip(view_params).enumerate() {
        let Some(depth) = vp.depth_along(ray) else {
            continue;
        };
        if best.as_ref().is_some_and(|b| b.depth <= depth) {
            continue;
        }
        let x_tgt = to_target(&(ray * depth));
        let (a, b) = pp.coords(&x_tgt);
        if !point_in_polygon(&pp.plane.polygon, a, b) {
            continue;
        }
        best = Some(Hit {
            depth,
            id: (j + 1) as u16,
            intensity: texture_value(texture, pp.plane.texture_seed, a, b),
        });
    }
    best
}

/// Ray-casts both views of a scene.
pub fn render(spec: &SceneSpec) -> Result<RenderedPair> {
    spec.validate()?;
    let prepared: Vec<PreparedPlane<'_>> = spec
        .planes
        .iter()
        .map(|plane| {
            let (origin, e1, e2) = plane_frame(&plane.param);
            PreparedPlane {
                plane,
                origin,
                e1,
                e2,
            }
        })
        .collect();
    let k = &spec.intrinsics;
    let tgt_params: Vec<PlaneParam> = spec.planes.iter().map(|p| p.param).collect();

    let (w, h) = (k.width, k.height);
    let mut target = vec![0.0; w * h];
    let mut depth = DepthMap::invalid(w, h);
    let mut ids = Raster::filled(w, h, 0u16);
    for v in 0..h {
        for u in 0..w {
            let ray = k.ray(u as f64, v as f64);
            match cast(&prepared, &tgt_params, &ray, |x| *x, &spec.texture) {
                Some(hit) => {
                    target[v * w + u] = hit.intensity;
                    depth.set(u, v, Some(hit.depth));
                    ids.set(u, v, hit.id);
                }
                None => {
                    target[v * w + u] = BACKGROUND_INTENSITY;
                    depth.set(u, v, Some(spec.far_depth));
                }
            }
        }
    }

    let ks = spec.source_intrinsics();
    let inv = spec.pose.inverse();
    let src_params: Vec<PlaneParam> = tgt_params
        .iter()
        .map(|p| {
            p.transformed(&spec.pose)
                .unwrap_or(PlaneParam(Vector3::new(0.0, 0.0, 1.0)))
        })
        .collect();
    let mut source = vec![0.0; ks.width * ks.height];
    for v in 0..ks.height {
        for u in 0..ks.width {
            let ray = ks.ray(u as f64, v as f64);
            source[v * ks.width + u] = match cast(
                &prepared,
                &src_params,
                &ray,
                |x| inv.transform(x),
                &spec.texture,
            ) {
                Some(hit) => hit.intensity,
                None => BACKGROUND_INTENSITY,
            };
        }
    }

    Ok(RenderedPair {
        target: ImageRaster::new(w, h, 1, target)?,
        source: ImageRaster::new(ks.width, ks.height, 1, source)?,
        depth,
        instance_ids: ids,
        params: tgt_params,
        far_depth: spec.far_depth,
    })
}

/// Adds clamped zero-mean Gaussian intensity noise.
pub fn add_noise(image: &ImageRaster, sigma: f64, seed: u64) -> Result<ImageRaster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let data = image
        .data()
        .iter()
        .map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    ImageRaster::with_validity(
        image.width(),
        image.height(),
        image.channels(),
        data,
        image.validity().clone(),
    )
}

/// Knobs for [`SceneSampler::sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSampler {
    pub intrinsics: CameraIntrinsics,
    /// Depth range at each plane's region center, meters.
    pub depth_range: (f64, f64),
    pub translation_range: (f64, f64),
    pub max_rotation_deg: f64,
    /// Planes must lie this far inside the hull on every axis.
    pub hull: [AxisRange; 3],
    pub hull_margin: f64,
    /// Every pixel of a plane's region must see it within this depth range.
    pub valid_depth: (f64, f64),
    pub max_occlusion: f64,
    pub far_depth: f64,
    pub texture: TextureParams,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(100.0, 100.0, 63.5, 47.5, 128, 96)
                .expect("default intrinsics are valid"),
            depth_range: (1.0, 2.0),
            translation_range: (0.05, 0.15),
            max_rotation_deg: 2.0,
            hull: default_ranges(),
            hull_margin: 0.25,
            valid_depth: (0.4, 8.0),
            max_occlusion: 0.05,
            far_depth: 20.0,
            texture: TextureParams::default(),
        }
    }
}

const MAX_ATTEMPTS: usize = 1000;

impl SceneSampler {
    /// Deterministic scene with `n_planes` side-by-side planes whose normals
    /// make an angle in `slant_deg` with the optical axis.
    pub fn sample(&self, seed: u64, n_planes: usize, slant_deg: (f64, f64)) -> Result<SceneSpec> {
        if n_planes == 0 {
            return Err(Error::invalid("need at least one plane"));
        }
        if !(slant_deg.0 >= 0.0 && slant_deg.1 >= slant_deg.0 && slant_deg.1 < 90.0) {
            return Err(Error::invalid("slant range must lie in [0, 90) degrees"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_ATTEMPTS {
            if let Some(spec) = self.try_sample(&mut rng, n_planes, slant_deg)? {
                return Ok(spec);
            }
        }
        Err(Error::invalid(
            "could not sample a scene satisfying the constraints",
        ))
    }

    fn try_sample(
        &self,
        rng: &mut ChaCha8Rng,
        n_planes: usize,
        slant_deg: (f64, f64),
    ) -> Result<Option<SceneSpec>> {
        let k = &self.intrinsics;
        let (w, h) = (k.width as f64, k.height as f64);
        let margin = 0.5 * w.max(h);

        // Column boundaries, at least a fifth of the even share wide.
        let min_width = w / n_planes as f64 * 0.6;
        let mut cuts = vec![0.0];
        for i in 1..n_planes {
            let even = w * i as f64 / n_planes as f64;
            let jitter = (w / n_planes as f64 - min_width) / 2.0;
            cuts.push((even + rng.random_range(-jitter..=jitter)).round());
        }
        cuts.push(w);

        let mut planes = Vec::with_capacity(n_planes);
        for j in 0..n_planes {
            let (c0, c1) = (cuts[j], cuts[j + 1]);
            let center = k.ray((c0 + c1) / 2.0 - 0.5, h / 2.0 - 0.5);
            let depth = rng.random_range(self.depth_range.0..=self.depth_range.1);
            let theta = rng.random_range(slant_deg.0..=slant_deg.1).to_radians();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let n = Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            );
            let offset = -n.dot(&(center * depth));
            if offset >= -1e-3 {
                return Ok(None);
            }
            let param = PlaneParam::from_normal_offset(n, offset)?;
            if !self.inside_hull(&param) {
                return Ok(None);
            }
            // Region corners on pixel edges; outer image borders get a margin.
            let left = if j == 0 { c0 - 0.5 - margin } else { c0 - 0.5 };
            let right = if j + 1 == n_planes {
                c1 - 0.5 + margin
            } else {
                c1 - 0.5
            };
            let (top, bottom) = (-0.5 - margin, h - 0.5 + margin);
            let (origin, e1, e2) = plane_frame(&param);
            let mut polygon = Vec::with_capacity(4);
            for (u, v) in [(left, top), (right, top), (right, bottom), (left, bottom)] {
                let Some(z) = param.depth_along(&k.ray(u, v)) else {
                    return Ok(None);
                };
                let x = k.ray(u, v) * z - origin;
                polygon.push([x.dot(&e1), x.dot(&e2)]);
            }
            // Every pixel of the region must see the plane at a sane depth.
            for (u, v) in [
                (c0, 0.0),
                (c1 - 1.0, 0.0),
                (c0, h - 1.0),
                (c1 - 1.0, h - 1.0),
            ] {
                match param.depth_along(&k.ray(u, v)) {
                    Some(z) if z >= self.valid_depth.0 && z <= self.valid_depth.1 => {}
                    _ => return Ok(None),
                }
            }
            planes.push(ScenePlane {
                param,
                polygon,
                texture_seed: rng.random(),
            });
        }

        let norm = rng.random_range(self.translation_range.0..=self.translation_range.1);
        let dir = loop {
            let d = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
            );
            if d.norm() > 0.2 {
                break d.normalize();
            }
        };
        let axis = Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let angle = rng.random_range(0.0..=self.max_rotation_deg).to_radians();
        let pose = RelativePose::new(
            Rotation3::from_axis_angle(&axis, angle).into_inner(),
            dir * norm,
        )?;
        let spec = SceneSpec {
            planes,
            intrinsics: *k,
            source_intrinsics: None,
            pose,
            far_depth: self.far_depth,
            texture: self.texture,
        };
        let rendered = render(&spec)?;
        if rendered.visible_planes() != n_planes
            || occlusion_fraction(&spec, &rendered) > self.max_occlusion
        {
            return Ok(None);
        }
        Ok(Some(spec))
    }

    fn inside_hull(&self, p: &PlaneParam) -> bool {
        self.hull
            .iter()
            .enumerate()
            .all(|(a, r)| p.0[a] > r.lo + self.hull_margin && p.0[a] < r.hi - self.hull_margin)
    }
}

/// Deterministic scene from the default sampler.
pub fn sample_scene(seed: u64, n_planes: usize, slant_deg: (f64, f64)) -> Result<SceneSpec> {
    SceneSampler::default().sample(seed, n_planes, slant_deg)
}

/// Fraction of in-view target planar pixels whose source projection lands on
/// a different surface.
pub fn occlusion_fraction(spec: &SceneSpec, rendered: &RenderedPair) -> f64 {
    let k = &spec.intrinsics;
    let ks = spec.source_intrinsics();
    let prepared: Vec<PreparedPlane<'_>> = spec
        .planes
        .iter()
        .map(|plane| {
            let (origin, e1, e2) = plane_frame(&plane.param);
            PreparedPlane {
                plane,
                origin,
                e1,
                e2,
            }
        })
        .collect();
    let src_params: Vec<PlaneParam> = spec
        .planes
        .iter()
        .map(|p| {
            p.param
                .transformed(&spec.pose)
                .unwrap_or(PlaneParam(Vector3::new(0.0, 0.0, 1.0)))
        })
        .collect();
    let inv = spec.pose.inverse();
    let (mut seen, mut occluded) = (0usize, 0usize);
    for (u, v, d) in rendered.depth.iter_valid() {
        let id = *rendered.instance_ids.get(u, v);
        if id == 0 {
            continue;
        }
        let xs = spec.pose.transform(&(k.ray(u as f64, v as f64) * d));
        if xs.z <= 0.0 {
            continue;
        }
        let (su, sv) = ks.project(&xs);
        if !(su >= -0.5 && su < ks.width as f64 - 0.5 && sv >= -0.5 && sv < ks.height as f64 - 0.5)
        {
            continue;
        }
        seen += 1;
        let ray = ks.ray(su, sv);
        let hit = cast(
            &prepared,
            &src_params,
            &ray,
            |x| inv.transform(x),
            &spec.texture,
        );
        if hit.is_none_or(|h| h.id != id) {
            occluded += 1;
        }
    }
    if seen == 0 {
        0.0
    } else {
        occluded as f64 / seen as f64
    }
}
