//! Depth error metrics and plane detection AP / mAP.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::pooling::SoftMask;

/// Depth-error thresholds (meters) at which detection AP is reported.
pub const AP_DEPTH_THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.9];
/// Predictions need mask IoU strictly above this to match.
pub const IOU_GATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Standard depth metrics over pixels valid in both maps.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    gt.values().check_dims(pred.dims())?;
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for (x, y, g) in gt.iter_valid() {
        let Some(d) = pred.get(x, y) else {
            continue;
        };
        let diff = d - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = d.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (d / g).max(g / d);
        for (k, w) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *w += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
    })
}

/// One predicted plane with its reconstructed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: SoftMask,
    pub score: f64,
    pub depth: DepthMap,
    pub label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPlane {
    pub mask: SoftMask,
    pub label: Option<u32>,
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub predictions: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthPlane>,
    pub gt_depth: DepthMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    /// AP at each of [`AP_DEPTH_THRESHOLDS`].
    pub ap_per_threshold: [f64; 4],
    pub ap: f64,
    /// Semantic mAP; `None` when the ground truth carries no labels.
    pub map: Option<f64>,
}

fn mask_iou(a: &SoftMask, b: &SoftMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (sa, sb) in a.values().iter().zip(b.values().iter()) {
        let (fa, fb) = (*sa > 0.5, *sb > 0.5);
        inter += (fa && fb) as usize;
        union += (fa || fb) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean absolute depth error over the mask intersection where both depths are valid.
fn intersection_depth_error(det: &Detection, gt: &GroundTruthPlane, gt_depth: &DepthMap) -> f64 {
    let (w, h) = gt_depth.dims();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !(det.mask.is_foreground(x, y) && gt.mask.is_foreground(x, y)) {
                continue;
            }
            if let (Some(d), Some(g)) = (det.depth.get(x, y), gt_depth.get(x, y)) {
                sum += (d - g).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// All-point interpolated area under a precision/recall sequence.
pub fn average_precision(tp: &[bool], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, t) in tp.iter().enumerate() {
        hits += *t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / total_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Detection AP pooled over all frames.
///
/// Predictions are ranked by descending score; equal scores keep input order
/// (frame order, then prediction order). Each prediction takes the unmatched
/// ground-truth plane of highest IoU among those with IoU > 0.5 and, when
/// `depth_threshold` is set, mean depth error over the mask intersection
/// strictly below the threshold.
pub fn detection_ap(frames: &[DetectionFrame], depth_threshold: Option<f64>) -> Result<f64> {
    for f in frames {
        let dims = f.gt_depth.dims();
        for g in &f.ground_truth {
            g.mask.values().check_dims(dims)?;
        }
        for d in &f.predictions {
            d.mask.values().check_dims(dims)?;
            d.depth.values().check_dims(dims)?;
        }
    }
    let total_gt: usize = frames.iter().map(|f| f.ground_truth.len()).sum();
    if total_gt == 0 {
        return Err(Error::UndefinedAp("no ground-truth planes"));
    }
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(fi, f)| (0..f.predictions.len()).map(move |pi| (fi, pi)))
        .collect();
    order.sort_by(|a, b| {
        let sa = frames[a.0].predictions[a.1].score;
        let sb = frames[b.0].predictions[b.1].score;
        sb.total_cmp(&sa)
    });
    let mut matched: Vec<Vec<bool>> = frames
        .iter()
        .map(|f| vec![false; f.ground_truth.len()])
        .collect();
    let mut tp = Vec::with_capacity(order.len());
    for (fi, pi) in order {
        let frame = &frames[fi];
        let det = &frame.predictions[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in frame.ground_truth.iter().enumerate() {
            if matched[fi][gi] {
                continue;
            }
            let iou = mask_iou(&det.mask, &gt.mask);
            if iou <= IOU_GATE {
                continue;
            }
            if let Some(t) = depth_threshold {
                if !(intersection_depth_error(det, gt, &frame.gt_depth) < t) {
                    continue;
                }
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            matched[fi][gi] = true;
        }
        tp.push(best.is_some());
    }
    Ok(average_precision(&tp, total_gt))
}

/// Mean over ground-truth classes of per-class AP, matching only equal labels.
pub fn detection_map(frames: &[DetectionFrame], depth_threshold: Option<f64>) -> Result<f64> {
    let classes: BTreeSet<u32> = frames
        .iter()
        .flat_map(|f| f.ground_truth.iter().filter_map(|g| g.label))
        .collect();
    if classes.is_empty() {
        return Err(Error::UndefinedAp("no labeled ground-truth planes"));
    }
    let mut sum = 0.0;
    for &c in &classes {
        let filtered: Vec<DetectionFrame> = frames
            .iter()
            .map(|f| DetectionFrame {
                predictions: f
                    .predictions
                    .iter()
                    .filter(|d| d.label == Some(c))
                    .cloned()
                    .collect(),
                ground_truth: f
                    .ground_truth
                    .iter()
                    .filter(|g| g.label == Some(c))
                    .cloned()
                    .collect(),
                gt_depth: f.gt_depth.clone(),
            })
            .collect();
        sum += detection_ap(&filtered, depth_threshold)?;
    }
    Ok(sum / classes.len() as f64)
}

/// AP at every reporting threshold, AP without depth test, and mAP if labeled.
pub fn detection_metrics(frames: &[DetectionFrame]) -> Result<DetectionMetrics> {
    let mut ap_per_threshold = [0.0; 4];
    for (slot, t) in ap_per_threshold.iter_mut().zip(AP_DEPTH_THRESHOLDS) {
        *slot = detection_ap(frames, Some(t))?;
    }
    let map = match detection_map(frames, None) {
        Ok(v) => Some(v),
        Err(Error::UndefinedAp(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DetectionMetrics {
        ap_per_threshold,
        ap: detection_ap(frames, None)?,
        map,
    })
}
