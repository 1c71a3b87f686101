//! Stereo pair selection from a posed frame sequence.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geometry::RelativePose;
use crate::io::Frame;

/// An accepted (target, source) pair, by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    pub target: usize,
    pub source: usize,
    /// Target camera to source camera.
    pub pose: RelativePose,
    pub translation: f64,
}

/// Relative pose taking target-camera points to source-camera points.
pub fn relative_pose(target: &Frame, source: &Frame) -> RelativePose {
    let rs_t = source.rotation.transpose();
    RelativePose {
        rotation: rs_t * target.rotation,
        translation: rs_t * (target.center - source.center),
    }
}

/// For each frame, the nearest later frame with `min_t <= |t| <= max_t`.
pub fn select_pairs(frames: &[Frame], min_t: f64, max_t: f64) -> Vec<PairSelection> {
    let mut out = Vec::new();
    for (i, tgt) in frames.iter().enumerate() {
        for (j, src) in frames.iter().enumerate().skip(i + 1) {
            let pose = relative_pose(tgt, src);
            let t = pose.translation.norm();
            if t >= min_t && t <= max_t {
                out.push(PairSelection {
                    target: i,
                    source: j,
                    pose,
                    translation: t,
                });
                break;
            }
        }
    }
    out
}

/// File references for one stereo pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPairRecord {
    pub target: PathBuf,
    pub source: PathBuf,
    pub intrinsics: PathBuf,
    pub source_intrinsics: Option<PathBuf>,
    pub pose: PathBuf,
    pub gt_depth: Option<PathBuf>,
    pub gt_masks: Option<PathBuf>,
}

impl StereoPairRecord {
    /// Check that every referenced file exists.
    pub fn check(&self) -> Result<()> {
        let paths = [
            Some(&self.target),
            Some(&self.source),
            Some(&self.intrinsics),
            self.source_intrinsics.as_ref(),
            Some(&self.pose),
            self.gt_depth.as_ref(),
            self.gt_masks.as_ref(),
        ];
        for p in paths.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::invalid(format!("missing file {}", p.display())));
            }
        }
        Ok(())
    }
}

/// One `key=path` field list per line:
/// `target=.. source=.. intrinsics=.. pose=.. [source_intrinsics=..] [depth=..] [masks=..]`.
pub fn parse_pair_list(text: &str) -> Result<Vec<StereoPairRecord>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let base = offset;
        offset += line.len();
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields: [Option<PathBuf>; 7] = Default::default();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(base, format!("expected key=path, got {tok:?}")))?;
            let slot = match k {
                "target" => 0,
                "source" => 1,
                "intrinsics" => 2,
                "source_intrinsics" => 3,
                "pose" => 4,
                "depth" => 5,
                "masks" => 6,
                _ => return Err(Error::parse(base, format!("unknown field {k:?}"))),
            };
            if fields[slot].replace(PathBuf::from(v)).is_some() {
                return Err(Error::parse(base, format!("duplicate field {k:?}")));
            }
        }
        let [target, source, intrinsics, source_intrinsics, pose, gt_depth, gt_masks] = fields;
        let need = |p: Option<PathBuf>, name: &str| {
            p.ok_or_else(|| Error::parse(base, format!("missing field {name:?}")))
        };
        out.push(StereoPairRecord {
            target: need(target, "target")?,
            source: need(source, "source")?,
            intrinsics: need(intrinsics, "intrinsics")?,
            source_intrinsics,
            pose: need(pose, "pose")?,
            gt_depth,
            gt_masks,
        });
    }
    Ok(out)
}

pub fn format_pair_list(records: &[StereoPairRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(
            s,
            "target={} source={} intrinsics={} pose={}",
            r.target.display(),
            r.source.display(),
            r.intrinsics.display(),
            r.pose.display()
        );
        if let Some(p) = &r.source_intrinsics {
            let _ = write!(s, " source_intrinsics={}", p.display());
        }
        if let Some(p) = &r.gt_depth {
            let _ = write!(s, " depth={}", p.display());
        }
        if let Some(p) = &r.gt_masks {
            let _ = write!(s, " masks={}", p.display());
        }
        s.push('\n');
    }
    s
}
