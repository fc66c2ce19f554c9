//! Reference implementations used as test oracles. They favor directness over
//! speed and share no code paths with the library beyond its data types.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use clusterdet::dataset::{ClassKind, Detection, ImageDetections, ImageRecord, LabelTree, ObjectAnnotation};
use clusterdet::geometry::{BBox, ImageDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn inter(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

pub fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let i = inter(a, b);
    if i == 0.0 {
        0.0
    } else {
        i / (a.w * a.h + b.w * b.h - i)
    }
}

/// Share of `a` inside `b`.
pub fn ref_coverage(a: &BBox, b: &BBox) -> f64 {
    if a.w * a.h <= 0.0 {
        0.0
    } else {
        inter(a, b) / (a.w * a.h)
    }
}

// ---------------------------------------------------------------- merging

/// Quadratic restatement of the cluster merge: repeatedly pick the unvisited
/// small box with the smallest (top, left, index), open a window on it and
/// sweep every remaining candidate in the same order.
pub fn naive_nmm(anns: &[ObjectAnnotation], dims: ImageDims, w_b: f64, h_b: f64, tau: f64, small: f64) -> Vec<(BBox, Vec<usize>)> {
    let eligible: Vec<usize> = (0..anns.len())
        .filter(|&i| !anns[i].ignore && anns[i].bbox.w.max(anns[i].bbox.h) <= small)
        .collect();
    let before = |i: usize, j: usize| {
        let (a, b) = (&anns[i].bbox, &anns[j].bbox);
        (a.y, a.x, i) < (b.y, b.x, j)
    };
    let mut done = vec![false; anns.len()];
    let mut out = Vec::new();
    loop {
        let mut seed: Option<usize> = None;
        for &i in &eligible {
            if !done[i] && seed.is_none_or(|s| before(i, s)) {
                seed = Some(i);
            }
        }
        let Some(s) = seed else { break };
        done[s] = true;
        let b = &anns[s].bbox;
        let axis = |c: f64, ext: f64, lim: f64| {
            if ext >= lim {
                (0.0, lim)
            } else {
                ((c - ext / 2.0).max(0.0).min(lim - ext), ext)
            }
        };
        let (x, w) = axis(b.x + b.w / 2.0, w_b, dims.width);
        let (y, h) = axis(b.y + b.h / 2.0, h_b, dims.height);
        let window = BBox::new(x, y, w, h);

        // remaining candidates in visiting order
        let mut rest: Vec<usize> = eligible.iter().copied().filter(|&j| !done[j]).collect();
        rest.sort_by(|&i, &j| if before(i, j) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
        let mut members = vec![s];
        for j in rest {
            if ref_coverage(&anns[j].bbox, &window) > tau {
                done[j] = true;
                members.push(j);
            }
        }
        out.push((window, members));
    }
    out
}

/// Random annotation scene with a mix of integer and fractional boxes, some
/// ignore-flagged and some too large to cluster.
pub fn random_scene(rng: &mut ChaCha8Rng, max_boxes: usize) -> (ImageDims, Vec<ObjectAnnotation>) {
    let dims = ImageDims::new(rng.random_range(300..2000) as f64, rng.random_range(300..1500) as f64);
    let n = rng.random_range(0..=max_boxes);
    let integer = rng.random_bool(0.5);
    let n_hot = rng.random_range(1..6);
    let hot: Vec<(f64, f64)> = (0..n_hot)
        .map(|_| (rng.random_range(0.0..dims.width), rng.random_range(0.0..dims.height)))
        .collect();
    let anns = (0..n)
        .map(|_| {
            let big = rng.random_bool(0.05);
            let (w, h) = if big {
                (rng.random_range(97.0..300.0), rng.random_range(20.0..300.0))
            } else {
                (rng.random_range(2.0..96.0), rng.random_range(2.0..96.0))
            };
            let (cx, cy) = if rng.random_bool(0.7) {
                let (hx, hy) = hot[rng.random_range(0..hot.len())];
                (hx + rng.random_range(-150.0..150.0), hy + rng.random_range(-150.0..150.0))
            } else {
                (rng.random_range(0.0..dims.width), rng.random_range(0.0..dims.height))
            };
            let mut b = BBox::new(cx - w / 2.0, cy - h / 2.0, w, h);
            if integer {
                b = BBox::new(b.x.round(), b.y.round(), b.w.round().max(1.0), b.h.round().max(1.0));
            }
            let b = b.clamp_to(dims).unwrap_or(BBox::new(0.0, 0.0, 1.0, 1.0));
            let mut a = ObjectAnnotation::new(b, rng.random_range(1..=10));
            a.ignore = rng.random_bool(0.05);
            a
        })
        .collect();
    (dims, anns)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- evaluation

fn lex(a: &BBox, b: &BBox) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.w.total_cmp(&b.w))
        .then(a.h.total_cmp(&b.h))
}

/// Precision at each recall sample is the best precision anywhere on the
/// curve at or beyond that recall.
pub fn brute_ap(hits: &[bool], n_gt: usize, points: usize) -> f64 {
    let mut curve = Vec::new();
    let mut tp = 0;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut total = 0.0;
    for k in 0..points {
        let r = k as f64 / (points - 1) as f64;
        let best = curve.iter().filter(|c| c.0 >= r).map(|c| c.1).fold(0.0, f64::max);
        total += best;
    }
    total / points as f64
}

/// Returns `(AP, AP50, AP75)` with AP averaged over 0.50:0.05:0.95.
pub fn brute_eval(dets: &[ImageDetections], gts: &[ImageRecord], tree: &LabelTree, cap: usize) -> (f64, f64, f64) {
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let mut by_image: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        by_image.entry(d.image_id).or_default().extend(d.detections.iter().copied());
    }
    for v in by_image.values_mut() {
        v.retain(|d| tree.is_base(d.category));
        v.sort_by(|a, b| b.score.total_cmp(&a.score).then(lex(&a.bbox, &b.bbox)));
        v.truncate(cap);
    }
    let mut table: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for cat in tree.base.iter().map(|c| c.id) {
        let n_gt: usize = gts
            .iter()
            .flat_map(|r| &r.annotations)
            .filter(|a| a.category == cat && !a.ignore)
            .count();
        if n_gt == 0 {
            continue;
        }
        for (ti, &t) in thresholds.iter().enumerate() {
            // (score, bbox, image, sequence, hit)
            let mut ranked: Vec<(f64, BBox, u64, usize, bool)> = Vec::new();
            for r in gts {
                let mine: Vec<&Detection> = by_image
                    .get(&r.id)
                    .map(|v| v.iter().filter(|d| d.category == cat).collect())
                    .unwrap_or_default();
                let real: Vec<&BBox> = r
                    .annotations
                    .iter()
                    .filter(|a| a.category == cat && !a.ignore)
                    .map(|a| &a.bbox)
                    .collect();
                let crowd: Vec<&BBox> = r
                    .annotations
                    .iter()
                    .filter(|a| (a.category == cat && a.ignore) || !matches!(tree.resolve(a.category), Some(ClassKind::Base(_))))
                    .map(|a| &a.bbox)
                    .collect();
                let mut used = vec![false; real.len()];
                for d in mine {
                    let mut pick: Option<(usize, f64)> = None;
                    for (g, gb) in real.iter().enumerate() {
                        let v = ref_iou(&d.bbox, gb);
                        if !used[g] && v >= t && pick.is_none_or(|p| v > p.1) {
                            pick = Some((g, v));
                        }
                    }
                    let hit = match pick {
                        Some((g, _)) => {
                            used[g] = true;
                            true
                        }
                        None if crowd.iter().any(|c| ref_coverage(&d.bbox, c) >= t) => continue,
                        None => false,
                    };
                    let seq = ranked.len();
                    ranked.push((d.score, d.bbox, r.id, seq, hit));
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(lex(&a.1, &b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
            let hits: Vec<bool> = ranked.iter().map(|x| x.4).collect();
            table.insert((ti, cat), brute_ap(&hits, n_gt, 101));
        }
    }
    let mean = |f: &dyn Fn(usize) -> bool| {
        let v: Vec<f64> = table.iter().filter(|((ti, _), _)| f(*ti)).map(|(_, &a)| a).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    (mean(&|_| true), mean(&|ti| ti == 0), mean(&|ti| ti == 5))
}

// ---------------------------------------------------------------- numerics

/// Central difference of `f` at `x`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
