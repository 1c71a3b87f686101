// Brute-force reference implementations checked against the library on
// random small instances.

#![allow(clippy::needless_range_loop)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slantsweep::metrics::{
    depth_metrics, detection_ap, Detection, DetectionFrame, GroundTruthPlane,
};
use slantsweep::pooling::{soft_pool, soft_pooling_loss, SoftMask};
use slantsweep::sweep::{aggregate_cost, matching_cost, CostVolume, ImageRaster, PlaneParamMap};
use slantsweep::{DepthMap, Raster};

const CASES: u64 = 200;

fn rng(case: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + case)
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize) {
    (r.random_range(1..9), r.random_range(1..9))
}

fn random_depth(
    r: &mut ChaCha8Rng,
    w: usize,
    h: usize,
    invalid_rate: f64,
) -> (Vec<f64>, Vec<bool>) {
    let mut vals = Vec::new();
    let mut ok = Vec::new();
    for _ in 0..w * h {
        let valid = !r.random_bool(invalid_rate);
        vals.push(if valid { r.random_range(0.3..6.0) } else { 0.0 });
        ok.push(valid);
    }
    (vals, ok)
}

fn depth_map(w: usize, h: usize, vals: &[f64], ok: &[bool]) -> DepthMap {
    DepthMap::new(
        Raster::from_vec(w, h, vals.to_vec()).unwrap(),
        Raster::from_vec(w, h, ok.to_vec()).unwrap(),
    )
    .unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn soft_pool_matches_weighted_mean() {
    let mut checked = 0;
    for case in 0..CASES {
        let mut r = rng(case);
        let (w, h) = dims(&mut r);
        let params: Vec<Vector3<f64>> = (0..w * h)
            .map(|_| {
                Vector3::new(
                    r.random_range(-2.0..2.0),
                    r.random_range(-2.0..2.0),
                    r.random_range(-2.0..-0.1),
                )
            })
            .collect();
        let valid: Vec<bool> = (0..w * h).map(|_| r.random_bool(0.8)).collect();
        let sigma: Vec<f64> = (0..w * h)
            .map(|_| {
                if r.random_bool(0.3) {
                    0.0
                } else {
                    r.random_range(0.0..1.0)
                }
            })
            .collect();
        let map = PlaneParamMap::new(
            Raster::from_vec(w, h, params.clone()).unwrap(),
            Raster::from_vec(w, h, valid.clone()).unwrap(),
        )
        .unwrap();
        let mask = SoftMask::new(Raster::from_vec(w, h, sigma.clone()).unwrap()).unwrap();

        let (mut num, mut den) = ([0.0f64; 3], 0.0f64);
        for i in 0..w * h {
            if valid[i] {
                for a in 0..3 {
                    num[a] += sigma[i] * params[i][a];
                }
                den += sigma[i];
            }
        }
        match soft_pool(&map, &mask) {
            Ok(p) => {
                assert!(den > 0.0, "case {case}: pooled an empty instance");
                for a in 0..3 {
                    assert!(close(p.0[a], num[a] / den, 1e-12), "case {case} axis {a}");
                }
                checked += 1;
            }
            Err(_) => assert_eq!(den, 0.0, "case {case}: spurious error"),
        }
    }
    assert!(checked >= 100);
}

pub fn soft_pooling_loss_matches_mean_abs_error() {
    let mut checked = 0;
    for case in 0..CASES {
        let mut r = rng(case);
        let (w, h) = dims(&mut r);
        let (pv, po) = random_depth(&mut r, w, h, 0.2);
        let (gv, go) = random_depth(&mut r, w, h, 0.2);
        let (mut sum, mut n) = (0.0, 0);
        for i in 0..w * h {
            if po[i] && go[i] {
                sum += (pv[i] - gv[i]).abs();
                n += 1;
            }
        }
        let got = soft_pooling_loss(&depth_map(w, h, &pv, &po), &depth_map(w, h, &gv, &go));
        if n == 0 {
            assert!(got.is_err());
        } else {
            assert!(close(got.unwrap(), sum / n as f64, 1e-12), "case {case}");
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

pub fn depth_metrics_match_definitions() {
    let mut checked = 0;
    for case in 0..CASES {
        let mut r = rng(case);
        let (w, h) = dims(&mut r);
        let (gv, go) = random_depth(&mut r, w, h, 0.2);
        let (mut pv, po) = random_depth(&mut r, w, h, 0.1);
        // Keep many predictions near the truth so every delta bucket is used.
        for i in 0..w * h {
            if po[i] && go[i] && r.random_bool(0.5) {
                pv[i] = gv[i] * r.random_range(0.7..1.4);
            }
        }
        let pairs: Vec<(f64, f64)> = (0..w * h)
            .filter(|&i| po[i] && go[i])
            .map(|i| (pv[i], gv[i]))
            .collect();
        let got = depth_metrics(&depth_map(w, h, &pv, &po), &depth_map(w, h, &gv, &go));
        if pairs.is_empty() {
            assert!(got.is_err());
            continue;
        }
        let m = got.unwrap();
        let n = pairs.len() as f64;
        let mean =
            |f: &dyn Fn(f64, f64) -> f64| pairs.iter().map(|&(d, g)| f(d, g)).sum::<f64>() / n;
        let frac = |k: i32| {
            pairs
                .iter()
                .filter(|&&(d, g)| f64::max(d / g, g / d) < 1.25f64.powi(k))
                .count() as f64
                / n
        };
        assert!(close(m.abs_rel, mean(&|d, g| (d - g).abs() / g), 1e-12));
        assert!(close(m.sq_rel, mean(&|d, g| (d - g).powi(2) / g), 1e-12));
        assert!(close(m.rmse, mean(&|d, g| (d - g).powi(2)).sqrt(), 1e-12));
        assert!(close(
            m.rmse_log,
            mean(&|d, g| (d.ln() - g.ln()).powi(2)).sqrt(),
            1e-12
        ));
        assert_eq!([m.delta1, m.delta2, m.delta3], [frac(1), frac(2), frac(3)]);
        checked += 1;
    }
    assert!(checked >= 100);
}

pub fn aggregate_cost_matches_direct_masked_mean() {
    for case in 0..CASES {
        let mut r = rng(case);
        let (w, h) = dims(&mut r);
        let n = r.random_range(1..4);
        let radius = if case % 2 == 0 {
            1
        } else {
            r.random_range(0..4)
        };
        let cost: Vec<f64> = (0..n * w * h).map(|_| r.random_range(0.0..2.0)).collect();
        let valid: Vec<bool> = (0..n * w * h).map(|_| r.random_bool(0.75)).collect();
        let vol = CostVolume::new(n, w, h, cost.clone(), valid.clone()).unwrap();
        let out = aggregate_cost(&vol, radius);
        let ri = radius as isize;
        for j in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let at = |xx: usize, yy: usize| j * w * h + yy * w + xx;
                    if !valid[at(x, y)] {
                        assert_eq!(out.get(j, x, y), None);
                        continue;
                    }
                    let (mut s, mut c) = (0.0, 0.0);
                    for dy in -ri..=ri {
                        for dx in -ri..=ri {
                            let (xx, yy) = (x as isize + dx, y as isize + dy);
                            if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                                continue;
                            }
                            let k = at(xx as usize, yy as usize);
                            if valid[k] {
                                s += cost[k];
                                c += 1.0;
                            }
                        }
                    }
                    let got = out.get(j, x, y).unwrap();
                    assert!(close(got, s / c, 1e-12), "case {case}: {got} vs {}", s / c);
                }
            }
        }
    }
}

#[allow(dead_code)]
pub fn matching_cost_matches_two_pass_zncc() {
    for case in 0..CASES {
        let mut r = rng(case);
        let (w, h) = (r.random_range(3..10), r.random_range(3..10));
        let window = [1, 3, 5][r.random_range(0..3)];
        let a: Vec<f64> = (0..w * h).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..w * h).map(|_| r.random_range(0.0..1.0)).collect();
        let bv: Vec<bool> = (0..w * h).map(|_| r.random_bool(0.95)).collect();
        let tgt = ImageRaster::new(w, h, 1, a.clone()).unwrap();
        let src = ImageRaster::with_validity(
            w,
            h,
            1,
            b.clone(),
            Raster::from_vec(w, h, bv.clone()).unwrap(),
        )
        .unwrap();
        let (cost, valid) = matching_cost(&tgt, &src, window).unwrap();
        let rr = (window / 2) as isize;
        for y in 0..h {
            for x in 0..w {
                let mut idx = Vec::new();
                for dy in -rr..=rr {
                    for dx in -rr..=rr {
                        let (xx, yy) = (x as isize + dx, y as isize + dy);
                        if xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize {
                            idx.push(yy as usize * w + xx as usize);
                        }
                    }
                }
                if idx.iter().any(|&i| !bv[i]) {
                    assert!(!*valid.get(x, y));
                    continue;
                }
                let n = idx.len() as f64;
                let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
                let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
                let va = idx.iter().map(|&i| (a[i] - ma).powi(2)).sum::<f64>() / n;
                let vb = idx.iter().map(|&i| (b[i] - mb).powi(2)).sum::<f64>() / n;
                let expect = if va < 1e-8 || vb < 1e-8 {
                    1.0
                } else {
                    let cov = idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / n;
                    1.0 - cov / (va * vb).sqrt()
                };
                assert!(*valid.get(x, y));
                assert!((cost.get(x, y) - expect).abs() < 1e-12, "case {case}");
            }
        }
    }
}

/// Greedy matcher and AP written from scratch over plain arrays.
struct RawFrame {
    w: usize,
    gt_depth: Vec<Option<f64>>,
    gt_masks: Vec<Vec<bool>>,
    preds: Vec<(f64, Vec<bool>, Vec<Option<f64>>)>,
}

fn reference_ap(frames: &[RawFrame], threshold: Option<f64>) -> f64 {
    let total: usize = frames.iter().map(|f| f.gt_masks.len()).sum();
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        for (pi, p) in f.preds.iter().enumerate() {
            ranked.push((p.0, fi, pi));
        }
    }
    // Stable insertion sort by descending score.
    for i in 1..ranked.len() {
        let mut j = i;
        while j > 0 && ranked[j - 1].0 < ranked[j].0 {
            ranked.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut used: Vec<Vec<bool>> = frames
        .iter()
        .map(|f| vec![false; f.gt_masks.len()])
        .collect();
    let mut hits = Vec::new();
    for &(_, fi, pi) in &ranked {
        let f = &frames[fi];
        let (_, pm, pd) = &f.preds[pi];
        let mut best = None;
        let mut best_iou = 0.5;
        for (gi, gm) in f.gt_masks.iter().enumerate() {
            if used[fi][gi] {
                continue;
            }
            let inter = pm.iter().zip(gm).filter(|(a, b)| **a && **b).count();
            let union = pm.iter().zip(gm).filter(|(a, b)| **a || **b).count();
            let iou = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
            if iou <= 0.5 {
                continue;
            }
            if let Some(t) = threshold {
                let errs: Vec<f64> = (0..pm.len())
                    .filter(|&i| pm[i] && gm[i])
                    .filter_map(|i| Some((pd[i]? - f.gt_depth[i]?).abs()))
                    .collect();
                if errs.is_empty() || errs.iter().sum::<f64>() / errs.len() as f64 >= t {
                    continue;
                }
            }
            if best.is_none() || iou > best_iou {
                best = Some(gi);
                best_iou = iou;
            }
        }
        if let Some(gi) = best {
            used[fi][gi] = true;
        }
        hits.push(best.is_some());
    }
    // Each true positive adds 1/total recall at the best precision reachable
    // at that recall or beyond.
    let prec: Vec<f64> = hits
        .iter()
        .scan(0usize, |tp, h| {
            *tp += *h as usize;
            Some(*tp)
        })
        .enumerate()
        .map(|(k, tp)| tp as f64 / (k + 1) as f64)
        .collect();
    (0..hits.len())
        .filter(|&k| hits[k])
        .map(|k| prec[k..].iter().cloned().fold(0.0, f64::max) / total as f64)
        .sum()
}

fn random_frame(r: &mut ChaCha8Rng) -> RawFrame {
    let (w, h) = (r.random_range(2..7), r.random_range(2..7));
    let n = w * h;
    let gt_depth: Vec<Option<f64>> = (0..n)
        .map(|_| r.random_bool(0.9).then(|| r.random_range(1.0..4.0)))
        .collect();
    let blob = |r: &mut ChaCha8Rng| -> Vec<bool> {
        let (x0, y0) = (r.random_range(0..w), r.random_range(0..h));
        let (x1, y1) = (r.random_range(x0..w) + 1, r.random_range(y0..h) + 1);
        (0..n)
            .map(|i| (x0..x1).contains(&(i % w)) && (y0..y1).contains(&(i / w)))
            .collect()
    };
    let gt_masks: Vec<Vec<bool>> = (0..r.random_range(0..4)).map(|_| blob(r)).collect();
    let mut preds = Vec::new();
    for _ in 0..r.random_range(0..5) {
        let mask = if !gt_masks.is_empty() && r.random_bool(0.7) {
            let mut m = gt_masks[r.random_range(0..gt_masks.len())].clone();
            for v in m.iter_mut() {
                if r.random_bool(0.1) {
                    *v = !*v;
                }
            }
            m
        } else {
            blob(r)
        };
        let depth: Vec<Option<f64>> = gt_depth
            .iter()
            .map(|g| {
                if r.random_bool(0.05) {
                    None
                } else {
                    Some(g.unwrap_or(2.0) + r.random_range(-0.8..0.8))
                }
            })
            .collect();
        // Coarse scores create ties.
        let score = (r.random_range(1..10) as f64) / 10.0;
        preds.push((score, mask, depth));
    }
    RawFrame {
        w,
        gt_depth,
        gt_masks,
        preds,
    }
}

fn to_library(f: &RawFrame) -> DetectionFrame {
    let h = f.gt_depth.len() / f.w;
    let mask = |m: &Vec<bool>| SoftMask::from_binary(&Raster::from_vec(f.w, h, m.clone()).unwrap());
    let depth = |d: &Vec<Option<f64>>| {
        DepthMap::new(
            Raster::from_vec(f.w, h, d.iter().map(|v| v.unwrap_or(0.0)).collect()).unwrap(),
            Raster::from_vec(f.w, h, d.iter().map(|v| v.is_some()).collect()).unwrap(),
        )
        .unwrap()
    };
    DetectionFrame {
        predictions: f
            .preds
            .iter()
            .map(|(s, m, d)| Detection {
                mask: mask(m),
                score: *s,
                depth: depth(d),
                label: None,
            })
            .collect(),
        ground_truth: f
            .gt_masks
            .iter()
            .map(|m| GroundTruthPlane {
                mask: mask(m),
                label: None,
            })
            .collect(),
        gt_depth: depth(&f.gt_depth),
    }
}

pub fn detection_ap_matches_brute_force_matcher() {
    let mut checked = 0;
    for case in 0..CASES {
        let mut r = rng(case);
        let frames: Vec<RawFrame> = (0..r.random_range(1..4))
            .map(|_| random_frame(&mut r))
            .collect();
        let lib: Vec<DetectionFrame> = frames.iter().map(to_library).collect();
        let total: usize = frames.iter().map(|f| f.gt_masks.len()).sum();
        for threshold in [None, Some(0.2), Some(0.4), Some(0.6), Some(0.9)] {
            let got = detection_ap(&lib, threshold);
            if total == 0 {
                assert!(got.is_err());
                continue;
            }
            let want = reference_ap(&frames, threshold);
            let got = got.unwrap();
            assert!(
                (got - want).abs() <= 1e-9,
                "case {case} {threshold:?}: {got} vs {want}"
            );
        }
        if total > 0 {
            checked += 1;
        }
    }
    assert!(checked >= 100);
}
