use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

/// Luma weights used to reduce RGB to a single matching channel.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Interleaved image with 1 or 3 channels in `[0, 1]` and per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    valid: Mask,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let valid = Raster::filled(width, height, true);
        Self::with_validity(width, height, channels, data, valid)
    }

    pub fn with_validity(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        valid: Mask,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(
                "image buffer size does not match dimensions",
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        valid.check_dims((width, height))?;
        Ok(Self {
            width,
            height,
            channels,
            data,
            valid,
        })
    }

    pub fn from_gray(gray: Raster<f64>) -> Result<Self> {
        let (w, h) = gray.dims();
        Self::new(w, h, 1, gray.into_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn validity(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.valid.get(x, y)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel intensity at a pixel.
    #[inline]
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        if self.channels == 1 {
            self.value(x, y, 0)
        } else {
            (0..3).map(|c| LUMA[c] * self.value(x, y, c)).sum()
        }
    }

    pub fn to_gray(&self) -> ImageRaster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.intensity(x, y))
            .collect();
        ImageRaster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            valid: self.valid.clone(),
        }
    }

    /// Averages `factor x factor` blocks; a block is valid only if all its pixels are.
    pub fn downsample(&self, factor: usize) -> Result<ImageRaster> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor)
        {
            return Err(Error::invalid(format!(
                "image {}x{} is not divisible by scale {factor}",
                self.width, self.height
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut data = vec![0.0; w * h * self.channels];
        let mut valid = Raster::filled(w, h, true);
        for y in 0..h {
            for x in 0..w {
                let mut ok = true;
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            let (sx, sy) = (x * factor + dx, y * factor + dy);
                            acc += self.value(sx, sy, c);
                            ok &= self.is_valid(sx, sy);
                        }
                    }
                    data[(y * w + x) * self.channels + c] = acc * norm;
                }
                valid.set(x, y, ok);
            }
        }
        Ok(ImageRaster {
            width: w,
            height: h,
            channels: self.channels,
            data,
            valid,
        })
    }

    /// Bilinear sample at continuous pixel-center coordinates.
    ///
    /// Returns `None` outside `[0, w-1] x [0, h-1]` or when any pixel with
    /// non-zero interpolation weight is invalid.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        let (wm, hm) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= 0.0 && x <= wm && y >= 0.0 && y <= hm) {
            return false;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let x1 = if ax > 0.0 { x0 + 1 } else { x0 };
        let y1 = if ay > 0.0 { y0 + 1 } else { y0 };
        if !(self.is_valid(x0, y0)
            && self.is_valid(x1, y0)
            && self.is_valid(x0, y1)
            && self.is_valid(x1, y1))
        {
            return false;
        }
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = self.value(x0, y0, c) * (1.0 - ax) + self.value(x1, y0, c) * ax;
            let bottom = self.value(x0, y1, c) * (1.0 - ax) + self.value(x1, y1, c) * ax;
            *o = top * (1.0 - ay) + bottom * ay;
        }
        true
    }
}
