//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::DepthHypothesisSet;
use crate::error::{Error, Result};
use crate::hypothesis::AxisRange;
use crate::pooling::SegmentConfig;
use crate::sweep::SweepConfig;

/// All tunable settings for a CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub segment: SegmentConfig,
    pub depth_min: f64,
    pub depth_max: f64,
    pub depth_count: usize,
    /// Fit planes to fronto depth per segmented region.
    pub fronto_fit: bool,
    pub min_translation: f64,
    pub max_translation: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            segment: SegmentConfig::default(),
            depth_min: 0.25,
            depth_max: 10.0,
            depth_count: 128,
            fronto_fit: true,
            min_translation: 0.05,
            max_translation: 0.15,
        }
    }
}

const KEYS: &[&str] = &[
    "grid_x_lo",
    "grid_x_hi",
    "grid_x_count",
    "grid_y_lo",
    "grid_y_hi",
    "grid_y_count",
    "grid_z_lo",
    "grid_z_hi",
    "grid_z_count",
    "window",
    "radius",
    "temperature",
    "working_scale",
    "upsample_factor",
    "min_valid_fraction",
    "angle_tol",
    "offset_tol",
    "min_area_fraction",
    "depth_min",
    "depth_max",
    "depth_count",
    "fronto_fit",
    "min_translation",
    "max_translation",
];

fn parse_value<T: std::str::FromStr>(offset: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::parse(offset, format!("bad value {v:?} for {key}")))
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Keys not present keep their defaults. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += raw.len();
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_offset, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::parse(line_offset, format!("unknown key {key:?}")));
            }
            if seen.contains(&key) {
                return Err(Error::parse(line_offset, format!("duplicate key {key:?}")));
            }
            seen.push(key);
            cfg.set(line_offset, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, off: usize, key: &str, v: &str) -> Result<()> {
        let axis = |k: &str| match k.as_bytes()[5] {
            b'x' => 0,
            b'y' => 1,
            _ => 2,
        };
        match key {
            k if k.starts_with("grid_") => {
                let r = &mut self.sweep.ranges[axis(k)];
                match &k[7..] {
                    "lo" => r.lo = parse_value(off, k, v)?,
                    "hi" => r.hi = parse_value(off, k, v)?,
                    _ => r.count = parse_value(off, k, v)?,
                }
            }
            "window" => self.sweep.window = parse_value(off, key, v)?,
            "radius" => self.sweep.radius = parse_value(off, key, v)?,
            "temperature" => self.sweep.temperature = parse_value(off, key, v)?,
            "working_scale" => self.sweep.working_scale = parse_value(off, key, v)?,
            "upsample_factor" => self.sweep.upsample_factor = parse_value(off, key, v)?,
            "min_valid_fraction" => self.sweep.min_valid_fraction = parse_value(off, key, v)?,
            "angle_tol" => self.segment.angle_tol_deg = parse_value(off, key, v)?,
            "offset_tol" => self.segment.offset_tol = parse_value(off, key, v)?,
            "min_area_fraction" => self.segment.min_area_fraction = parse_value(off, key, v)?,
            "depth_min" => self.depth_min = parse_value(off, key, v)?,
            "depth_max" => self.depth_max = parse_value(off, key, v)?,
            "depth_count" => self.depth_count = parse_value(off, key, v)?,
            "fronto_fit" => self.fronto_fit = parse_value(off, key, v)?,
            "min_translation" => self.min_translation = parse_value(off, key, v)?,
            "max_translation" => self.max_translation = parse_value(off, key, v)?,
            _ => unreachable!("key list and setter out of sync"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        let s = &self.segment;
        if !(s.angle_tol_deg > 0.0 && s.angle_tol_deg < 180.0) {
            return Err(Error::Config("angle_tol must be in (0, 180)".into()));
        }
        if !(s.offset_tol > 0.0 && s.offset_tol.is_finite()) {
            return Err(Error::Config("offset_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&s.min_area_fraction) {
            return Err(Error::Config("min_area_fraction must be in [0, 1)".into()));
        }
        self.depth_hypotheses()?;
        if !(self.min_translation >= 0.0 && self.min_translation <= self.max_translation) {
            return Err(Error::Config(
                "need 0 <= min_translation <= max_translation".into(),
            ));
        }
        Ok(())
    }

    pub fn depth_hypotheses(&self) -> Result<DepthHypothesisSet> {
        DepthHypothesisSet::inverse_uniform(self.depth_min, self.depth_max, self.depth_count)
    }

    /// Serialize every key; `parse(format())` reproduces `self`.
    pub fn format(&self) -> String {
        let mut s = String::new();
        for (name, r) in ["x", "y", "z"].iter().zip(&self.sweep.ranges) {
            let AxisRange { lo, hi, count } = *r;
            let _ = writeln!(s, "grid_{name}_lo = {lo}");
            let _ = writeln!(s, "grid_{name}_hi = {hi}");
            let _ = writeln!(s, "grid_{name}_count = {count}");
        }
        let c = &self.sweep;
        let _ = writeln!(s, "window = {}", c.window);
        let _ = writeln!(s, "radius = {}", c.radius);
        let _ = writeln!(s, "temperature = {}", c.temperature);
        let _ = writeln!(s, "working_scale = {}", c.working_scale);
        let _ = writeln!(s, "upsample_factor = {}", c.upsample_factor);
        let _ = writeln!(s, "min_valid_fraction = {}", c.min_valid_fraction);
        let _ = writeln!(s, "angle_tol = {}", self.segment.angle_tol_deg);
        let _ = writeln!(s, "offset_tol = {}", self.segment.offset_tol);
        let _ = writeln!(s, "min_area_fraction = {}", self.segment.min_area_fraction);
        let _ = writeln!(s, "depth_min = {}", self.depth_min);
        let _ = writeln!(s, "depth_max = {}", self.depth_max);
        let _ = writeln!(s, "depth_count = {}", self.depth_count);
        let _ = writeln!(s, "fronto_fit = {}", self.fronto_fit);
        let _ = writeln!(s, "min_translation = {}", self.min_translation);
        let _ = writeln!(s, "max_translation = {}", self.max_translation);
        s
    }
}
