use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "PVOL";

/// A dumped `N x h x w` volume; invalid cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// Writes `PVOL\n<N> <h> <w>\n` followed by little-endian f32 cells, slice-major.
pub fn write_volume(path: impl AsRef<Path>, vol: &RawVolume) -> Result<()> {
    if vol.data.len() != vol.count * vol.height * vol.width {
        return Err(Error::invalid("volume payload does not match shape"));
    }
    let mut out = format!("{MAGIC}\n{} {} {}\n", vol.count, vol.height, vol.width).into_bytes();
    for v in &vol.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<RawVolume> {
    let bytes = fs::read(path)?;
    let mut lines = 0;
    let mut header_end = None;
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            lines += 1;
            if lines == 2 {
                header_end = Some(i + 1);
                break;
            }
        }
    }
    let end = header_end.ok_or_else(|| Error::parse(bytes.len(), "truncated volume header"))?;
    let header =
        std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse(0, "non-UTF8 header"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(0, "bad volume magic"));
    }
    let dims: Vec<usize> = parts
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(MAGIC.len() + 1, "bad volume dimensions"))?;
    let [count, height, width] = dims[..] else {
        return Err(Error::parse(
            MAGIC.len() + 1,
            "volume header needs 3 dimensions",
        ));
    };
    let n = count * height * width;
    if bytes.len() != end + 4 * n {
        return Err(Error::parse(
            bytes.len().min(end + 4 * n),
            format!(
                "volume payload has {} bytes, expected {}",
                bytes.len() - end,
                4 * n
            ),
        ));
    }
    let data = bytes[end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RawVolume {
        count,
        height,
        width,
        data,
    })
}
