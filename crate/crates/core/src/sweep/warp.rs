use crate::geometry::Homography;
use crate::raster::Raster;

use super::image::ImageRaster;

/// Resamples `src` into the target view: output pixel `x` reads `src(H x)`.
///
/// The output has the same size as `src`.
pub fn warp_source(src: &ImageRaster, h: &Homography) -> ImageRaster {
    warp_source_to(src, h, src.width(), src.height())
}

/// Like [`warp_source`] with an explicit target size.
pub fn warp_source_to(
    src: &ImageRaster,
    h: &Homography,
    width: usize,
    height: usize,
) -> ImageRaster {
    let c = src.channels();
    let mut data = vec![0.0; width * height * c];
    let mut valid = Raster::filled(width, height, false);
    let mut px = [0.0; 3];
    for v in 0..height {
        for u in 0..width {
            let Some((x, y)) = h.apply(u as f64, v as f64) else {
                continue;
            };
            if src.sample_bilinear(x, y, &mut px) {
                let base = (v * width + u) * c;
                data[base..base + c].copy_from_slice(&px[..c]);
                valid.set(u, v, true);
            }
        }
    }
    ImageRaster::with_validity(width, height, c, data, valid).expect("warp output is well formed")
}
