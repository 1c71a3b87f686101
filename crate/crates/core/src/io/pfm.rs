use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::raster::Raster;
use crate::sweep::PlaneParamMap;

/// Decoded PFM contents, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Encodes little-endian PFM (negative scale), rows stored bottom to top.
pub fn write_pfm(img: &PfmImage) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::invalid(format!(
                "PFM supports 1 or 3 channels, got {c}"
            )))
        }
    };
    let row = img.width * img.channels;
    if img.data.len() != row * img.height {
        return Err(Error::invalid("PFM payload does not match dimensions"));
    }
    let mut out = format!("{magic}\n{} {}\n-1\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, "unexpected end of PFM header"));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::parse(start, "non-ASCII PFM header"))?;
    Ok((start, tok.to_string()))
}

/// Decodes PFM of either endianness; trailing or missing payload bytes are errors.
pub fn read_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0;
    let (off, magic) = header_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::parse(off, format!("bad PFM magic {magic:?}"))),
    };
    let dim = |pos: &mut usize| -> Result<usize> {
        let (off, tok) = header_token(bytes, pos)?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(off, format!("bad PFM dimension {tok:?}"))),
        }
    };
    let width = dim(&mut pos)?;
    let height = dim(&mut pos)?;
    let (off, tok) = header_token(bytes, &mut pos)?;
    let scale: f64 = tok
        .parse()
        .map_err(|_| Error::parse(off, format!("bad PFM scale {tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(off, "PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(pos, "missing separator after PFM scale"));
    }
    pos += 1;
    let n = width * height * channels;
    let expected = pos + n * 4;
    if bytes.len() != expected {
        return Err(Error::parse(
            bytes.len().min(expected),
            format!(
                "PFM payload has {} bytes, expected {}",
                bytes.len() - pos,
                n * 4
            ),
        ));
    }
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (i, chunk) in bytes[pos..].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

/// Depth map as single-channel PFM; invalid pixels become 0.
pub fn write_depth_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let data = depth
        .values()
        .iter()
        .zip(depth.validity().iter())
        .map(|(d, ok)| if *ok { *d as f32 } else { 0.0 })
        .collect();
    let img = PfmImage {
        width: depth.width(),
        height: depth.height(),
        channels: 1,
        data,
    };
    fs::write(path, write_pfm(&img)?)?;
    Ok(())
}

pub fn depth_from_pfm(img: &PfmImage) -> Result<DepthMap> {
    if img.channels != 1 {
        return Err(Error::invalid("depth PFM must be single channel"));
    }
    let values = Raster::from_vec(
        img.width,
        img.height,
        img.data.iter().map(|v| *v as f64).collect(),
    )?;
    Ok(DepthMap::from_values(values))
}

pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    depth_from_pfm(&read_pfm(&fs::read(path)?)?)
}

/// Plane-parameter map as three-channel PFM; invalid pixels become `(0, 0, 0)`.
pub fn write_param_pfm(path: impl AsRef<Path>, map: &PlaneParamMap) -> Result<()> {
    let mut data = Vec::with_capacity(map.width() * map.height() * 3);
    for (p, ok) in map.params().iter().zip(map.validity().iter()) {
        if *ok {
            data.extend(p.iter().map(|v| *v as f32));
        } else {
            data.extend([0.0f32; 3]);
        }
    }
    let img = PfmImage {
        width: map.width(),
        height: map.height(),
        channels: 3,
        data,
    };
    fs::write(path, write_pfm(&img)?)?;
    Ok(())
}

pub fn read_param_pfm(path: impl AsRef<Path>) -> Result<PlaneParamMap> {
    let img = read_pfm(&fs::read(path)?)?;
    if img.channels != 3 {
        return Err(Error::invalid("plane-parameter PFM must have 3 channels"));
    }
    let params = Raster::from_vec(
        img.width,
        img.height,
        img.data
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect(),
    )?;
    let valid = params.map(|p| p.iter().all(|v| v.is_finite()) && p.norm() > 0.0);
    PlaneParamMap::new(params, valid)
}
