use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PlaneParam, RelativePose};

/// Reads a UTF-8 file; IO errors name the path.
pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

fn number<T: std::str::FromStr>(offset: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(offset, format!("expected a number, got {tok:?}")))
}

fn exact_numbers<'a>(text: &'a str, n: usize, what: &str) -> Result<Vec<(usize, &'a str)>> {
    let toks = tokens(text);
    if toks.len() != n {
        let offset = toks.get(n).map_or(text.len(), |t| t.0);
        return Err(Error::parse(
            offset,
            format!("{what} needs {n} values, found {}", toks.len()),
        ));
    }
    Ok(toks)
}

/// 12 values, row-major `[R | t]`.
pub fn parse_pose(text: &str) -> Result<RelativePose> {
    let toks = exact_numbers(text, 12, "pose")?;
    let vals: Vec<f64> = toks
        .iter()
        .map(|(o, t)| number(*o, t))
        .collect::<Result<_>>()?;
    let rotation = Matrix3::new(
        vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
    );
    let translation = Vector3::new(vals[3], vals[7], vals[11]);
    RelativePose::new(rotation, translation)
}

pub fn format_pose(pose: &RelativePose) -> String {
    let mut s = String::new();
    for r in 0..3 {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            pose.rotation[(r, 0)],
            pose.rotation[(r, 1)],
            pose.rotation[(r, 2)],
            pose.translation[r]
        );
    }
    s
}

/// `fx fy cx cy width height`
pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    let toks = exact_numbers(text, 6, "intrinsics")?;
    let f: Vec<f64> = toks[..4]
        .iter()
        .map(|(o, t)| number(*o, t))
        .collect::<Result<_>>()?;
    let width: usize = number(toks[4].0, toks[4].1)?;
    let height: usize = number(toks[5].0, toks[5].1)?;
    CameraIntrinsics::new(f[0], f[1], f[2], f[3], width, height)
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!(
        "{} {} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    )
}

/// One line of an instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: u16,
    pub param: PlaneParam,
    pub score: f64,
    pub label: Option<u32>,
}

/// Lines of `id px py pz score [label]`; blank lines are skipped.
pub fn parse_instances(text: &str) -> Result<Vec<InstanceRecord>> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let toks: Vec<(usize, &str)> = tokens(line)
            .into_iter()
            .map(|(o, t)| (o + line_start, t))
            .collect();
        let base = line_start;
        line_start += line.len();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 && toks.len() != 6 {
            return Err(Error::parse(
                base,
                format!("instance line needs 5 or 6 fields, found {}", toks.len()),
            ));
        }
        let id: u16 = number(toks[0].0, toks[0].1)?;
        let p: Vec<f64> = toks[1..4]
            .iter()
            .map(|(o, t)| number(*o, t))
            .collect::<Result<_>>()?;
        let param = PlaneParam::new(p[0], p[1], p[2])
            .map_err(|_| Error::parse(toks[1].0, "invalid plane"))?;
        let score: f64 = number(toks[4].0, toks[4].1)?;
        if !(score > 0.0 && score < 1.0) {
            return Err(Error::parse(toks[4].0, "score must be in (0, 1)"));
        }
        let label = match toks.get(5) {
            Some((o, t)) => Some(number(*o, t)?),
            None => None,
        };
        out.push(InstanceRecord {
            id,
            param,
            score,
            label,
        });
    }
    Ok(out)
}

pub fn format_instances(records: &[InstanceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let p = r.param.vector();
        let _ = write!(s, "{} {} {} {} {}", r.id, p.x, p.y, p.z, r.score);
        if let Some(l) = r.label {
            let _ = write!(s, " {l}");
        }
        s.push('\n');
    }
    s
}

/// Lines of `px py pz`.
pub fn parse_plane_samples(text: &str) -> Result<Vec<PlaneParam>> {
    let toks = tokens(text);
    if !toks.len().is_multiple_of(3) {
        return Err(Error::parse(text.len(), "plane samples need 3 values each"));
    }
    toks.chunks_exact(3)
        .map(|c| {
            let v: Vec<f64> = c
                .iter()
                .map(|(o, t)| number(*o, t))
                .collect::<Result<_>>()?;
            Ok(PlaneParam(Vector3::new(v[0], v[1], v[2])))
        })
        .collect()
}

pub fn format_plane_samples(samples: &[PlaneParam]) -> String {
    samples
        .iter()
        .map(|p| format!("{} {} {}\n", p.0.x, p.0.y, p.0.z))
        .collect()
}

/// A trajectory frame: image path plus camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub path: PathBuf,
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

/// Lines of `path r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz` (camera to world).
pub fn parse_frames(text: &str) -> Result<Vec<Frame>> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let base = line_start;
        line_start += line.len();
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 13 {
            return Err(Error::parse(
                base,
                format!("frame line needs 13 fields, found {}", toks.len()),
            ));
        }
        let v: Vec<f64> = toks[1..]
            .iter()
            .map(|(o, t)| number(o + base, t))
            .collect::<Result<_>>()?;
        let pose = RelativePose::new(
            Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            Vector3::new(v[3], v[7], v[11]),
        )
        .map_err(|e| Error::parse(base, e.to_string()))?;
        out.push(Frame {
            path: PathBuf::from(toks[0].1),
            rotation: pose.rotation,
            center: pose.translation,
        });
    }
    Ok(out)
}
