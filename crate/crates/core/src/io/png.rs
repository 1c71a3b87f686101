use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::pooling::{PlaneInstance, PlaneInstanceSet, SoftMask};
use crate::raster::Raster;
use crate::sweep::{ImageRaster, LUMA};

/// Reads an 8-bit PNG as single-channel `[0, 1]` intensities.
pub fn read_image_png(path: impl AsRef<Path>) -> Result<ImageRaster> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| (0..3).map(|c| LUMA[c] * p[c] as f64 / 255.0).sum())
            .collect(),
    };
    ImageRaster::new(w, h, 1, data)
}

/// Writes the intensity channel as 8-bit grayscale, rounding to nearest.
pub fn write_image_png(path: impl AsRef<Path>, img: &ImageRaster) -> Result<()> {
    let (w, h) = img.dims();
    let out = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = img.intensity(x as usize, y as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    });
    out.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Instance-id raster as 16-bit grayscale PNG.
pub fn write_mask_png(path: impl AsRef<Path>, ids: &Raster<u16>) -> Result<()> {
    let (w, h) = ids.dims();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, ids.as_slice().to_vec())
            .ok_or_else(|| Error::invalid("mask buffer size mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a single-channel 8- or 16-bit PNG of instance ids.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Raster<u16>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids = match img {
        DynamicImage::ImageLuma16(g) => g.into_raw(),
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u16::from).collect(),
        _ => return Err(Error::invalid("instance mask PNG must be single-channel")),
    };
    Raster::from_vec(w, h, ids)
}

/// Binary masks for ids `1..=max`; ids with no pixels yield no instance.
/// Scores come from `score_of(id)`.
pub fn ids_to_instances(
    ids: &Raster<u16>,
    mut score_of: impl FnMut(u16) -> f64,
) -> Result<(Vec<u16>, PlaneInstanceSet)> {
    let max = ids.iter().copied().max().unwrap_or(0);
    let mut present = vec![false; max as usize + 1];
    for id in ids.iter() {
        present[*id as usize] = true;
    }
    let mut used = Vec::new();
    let mut instances = Vec::new();
    for id in 1..=max {
        if !present[id as usize] {
            continue;
        }
        let mask = SoftMask::from_binary(&ids.map(|v| *v == id));
        instances.push(PlaneInstance::new(mask, score_of(id))?);
        used.push(id);
    }
    Ok((used, PlaneInstanceSet::new(instances)?))
}

/// Id raster from foreground masks; later instances overwrite earlier ones
/// only where their score is higher.
pub fn instances_to_ids(set: &PlaneInstanceSet, width: usize, height: usize) -> Raster<u16> {
    let mut ids = Raster::filled(width, height, 0u16);
    let mut best = Raster::filled(width, height, f64::NEG_INFINITY);
    for (i, inst) in set.iter().enumerate() {
        for y in 0..height {
            for x in 0..width {
                if inst.mask.is_foreground(x, y) && inst.score > *best.get(x, y) {
                    best.set(x, y, inst.score);
                    ids.set(x, y, (i + 1) as u16);
                }
            }
        }
    }
    ids
}
