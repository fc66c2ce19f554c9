//! COCO-style average precision over fused detections.
//!
//! Detections are matched greedily by descending score within each
//! (image, category). Ignore-flagged ground truth behaves like a COCO crowd
//! region: a detection lying inside one (by its own area) and matching nothing
//! else is dropped from the precision/recall accumulation. Ignore markers whose
//! category owns no channel apply to every category.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassKind, Detection, ImageDetections, ImageRecord, LabelTree};
use crate::error::{Error, Result};
use crate::geometry::{coverage, iou, BBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub per_image_cap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            per_image_cap: 500,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("at least one IoU threshold is required".into()));
        }
        if self.iou_thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0))
            || self.iou_thresholds.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(
                "IoU thresholds must be strictly increasing within (0, 1)".into(),
            ));
        }
        if self.recall_points < 2 || self.per_image_cap == 0 {
            return Err(Error::InvalidConfig(
                "recall_points must be at least 2 and per_image_cap at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A ground-truth box as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub bbox: BBox,
    pub ignore: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    /// Matched ground truth at this index.
    TruePositive(usize),
    FalsePositive,
    /// Overlaps only ignore-flagged ground truth.
    Ignored,
}

/// Ranking used everywhere: score descending, then box lexicographically.
pub fn rank_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.bbox.total_cmp(&b.bbox))
}

/// Matches one image's detections of one category against its ground truth.
///
/// Returns `(detection index, outcome)` in matching order.
pub fn match_detections(dets: &[Detection], gts: &[GtBox], iou_thresh: f64) -> Vec<(usize, MatchOutcome)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_cmp(&dets[a], &dets[b]));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let bbox = &dets[d].bbox;
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if gt.ignore || taken[g] {
                    continue;
                }
                let v = iou(bbox, &gt.bbox);
                if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            let outcome = match best {
                Some((g, _)) => {
                    taken[g] = true;
                    MatchOutcome::TruePositive(g)
                }
                None if gts
                    .iter()
                    .any(|gt| gt.ignore && coverage(bbox, &gt.bbox) >= iou_thresh) =>
                {
                    MatchOutcome::Ignored
                }
                None => MatchOutcome::FalsePositive,
            };
            (d, outcome)
        })
        .collect()
}

/// One ranked detection outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub image_id: u64,
    pub det: Detection,
    pub true_positive: bool,
}

/// Area under the interpolated precision/recall curve, sampled at
/// `recall_points` evenly spaced recalls. `None` when there is no ground truth.
pub fn average_precision(outcomes: &[ScoredOutcome], n_gt: usize, recall_points: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut ranked = outcomes.to_vec();
    ranked.sort_by(|a, b| rank_cmp(&a.det, &b.det).then(a.image_id.cmp(&b.image_id)));
    let n = ranked.len();
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0usize, 0usize);
    for o in &ranked {
        if o.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let steps = (recall_points - 1) as f64;
    let sum: f64 = (0..recall_points)
        .map(|k| {
            let r = k as f64 / steps;
            let idx = recall.partition_point(|&v| v < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / recall_points as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub category: u32,
    pub name: String,
    pub n_gt: usize,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    /// `(threshold, mean AP over categories)`.
    pub per_threshold: Vec<(f64, f64)>,
    pub per_category: Vec<CategoryAp>,
}

/// Ground-truth counts and per-threshold outcomes of one image.
type ImageTally = (BTreeMap<u32, usize>, Vec<BTreeMap<u32, Vec<ScoredOutcome>>>);

struct Accumulator {
    /// Per threshold, per category: ranked outcomes.
    outcomes: Vec<BTreeMap<u32, Vec<ScoredOutcome>>>,
    n_gt: BTreeMap<u32, usize>,
}

/// Ground truth split into per-category lists plus category-agnostic ignore regions.
fn gt_by_category(record: &ImageRecord, tree: &LabelTree) -> (HashMap<u32, Vec<GtBox>>, Vec<GtBox>) {
    let mut per_cat: HashMap<u32, Vec<GtBox>> = HashMap::new();
    let mut shared = Vec::new();
    for a in &record.annotations {
        let gt = GtBox {
            bbox: a.bbox,
            ignore: a.ignore,
        };
        match tree.resolve(a.category) {
            Some(ClassKind::Base(_)) => per_cat.entry(a.category).or_default().push(gt),
            _ => shared.push(GtBox { ignore: true, ..gt }),
        }
    }
    (per_cat, shared)
}

/// AP over all IoU thresholds and categories, AP50, AP75, and a per-category table.
pub fn ap_summary(dets: &[ImageDetections], gts: &[ImageRecord], tree: &LabelTree, cfg: &EvalConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    if gts.iter().all(|r| r.annotations.is_empty()) {
        return Err(Error::EmptyGroundTruth);
    }
    let mut thresholds = cfg.iou_thresholds.clone();
    for extra in [0.5, 0.75] {
        if !thresholds.iter().any(|&t| (t - extra).abs() < 1e-12) {
            thresholds.push(extra);
        }
    }

    let det_index: HashMap<u64, &[Detection]> = dets
        .iter()
        .map(|d| (d.image_id, d.detections.as_slice()))
        .collect();
    let categories: Vec<u32> = tree.base.iter().map(|c| c.id).collect();

    let per_image: Vec<ImageTally> = gts
        .par_iter()
        .map(|record| {
            let (per_cat, shared) = gt_by_category(record, tree);
            let mut mine: Vec<Detection> = det_index
                .get(&record.id)
                .map(|d| d.iter().filter(|d| tree.is_base(d.category)).copied().collect())
                .unwrap_or_default();
            mine.sort_by(rank_cmp);
            mine.truncate(cfg.per_image_cap);

            let mut n_gt = BTreeMap::new();
            let mut outcomes = vec![BTreeMap::new(); thresholds.len()];
            for &cat in &categories {
                let mut cat_gts: Vec<GtBox> = per_cat.get(&cat).cloned().unwrap_or_default();
                n_gt.insert(cat, cat_gts.iter().filter(|g| !g.ignore).count());
                cat_gts.extend_from_slice(&shared);
                let cat_dets: Vec<Detection> = mine.iter().filter(|d| d.category == cat).copied().collect();
                for (ti, &t) in thresholds.iter().enumerate() {
                    let list: Vec<ScoredOutcome> = match_detections(&cat_dets, &cat_gts, t)
                        .into_iter()
                        .filter_map(|(d, o)| match o {
                            MatchOutcome::Ignored => None,
                            o => Some(ScoredOutcome {
                                image_id: record.id,
                                det: cat_dets[d],
                                true_positive: matches!(o, MatchOutcome::TruePositive(_)),
                            }),
                        })
                        .collect();
                    outcomes[ti].insert(cat, list);
                }
            }
            (n_gt, outcomes)
        })
        .collect();

    let mut acc = Accumulator {
        outcomes: vec![BTreeMap::new(); thresholds.len()],
        n_gt: BTreeMap::new(),
    };
    for (n_gt, outcomes) in per_image {
        for (cat, n) in n_gt {
            *acc.n_gt.entry(cat).or_default() += n;
        }
        for (ti, per_cat) in outcomes.into_iter().enumerate() {
            for (cat, list) in per_cat {
                acc.outcomes[ti].entry(cat).or_default().extend(list);
            }
        }
    }

    // ap[t][c], None where the category has no ground truth
    let ap: Vec<Vec<Option<f64>>> = (0..thresholds.len())
        .map(|ti| {
            categories
                .iter()
                .map(|cat| {
                    let list = acc.outcomes[ti].get(cat).map(Vec::as_slice).unwrap_or(&[]);
                    average_precision(list, acc.n_gt[cat], cfg.recall_points)
                })
                .collect()
        })
        .collect();

    let mean = |vals: &mut dyn Iterator<Item = f64>| -> Option<f64> {
        let (s, n) = vals.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    };
    let thr_index = |x: f64| thresholds.iter().position(|&t| (t - x).abs() < 1e-12).unwrap();
    let main: Vec<usize> = (0..cfg.iou_thresholds.len()).collect();
    let (i50, i75) = (thr_index(0.5), thr_index(0.75));

    let overall = mean(&mut main.iter().flat_map(|&ti| ap[ti].iter().flatten().copied()))
        .ok_or(Error::EmptyGroundTruth)?;
    let at = |ti: usize| mean(&mut ap[ti].iter().flatten().copied()).unwrap_or(0.0);

    let per_category = categories
        .iter()
        .enumerate()
        .filter(|&(ci, _)| ap[0][ci].is_some())
        .map(|(ci, &cat)| CategoryAp {
            category: cat,
            name: tree.name_of(cat).unwrap_or_default().to_string(),
            n_gt: acc.n_gt[&cat],
            ap: mean(&mut main.iter().filter_map(|&ti| ap[ti][ci])).unwrap_or(0.0),
            ap50: ap[i50][ci].unwrap_or(0.0),
            ap75: ap[i75][ci].unwrap_or(0.0),
        })
        .collect();

    Ok(EvalSummary {
        ap: overall,
        ap50: at(i50),
        ap75: at(i75),
        per_threshold: main.iter().map(|&ti| (thresholds[ti], at(ti))).collect(),
        per_category,
    })
}

/// Per-category table as CSV.
pub fn per_category_csv(summary: &EvalSummary) -> String {
    let mut out = String::from("category,name,n_gt,AP,AP50,AP75\n");
    for c in &summary.per_category {
        let _ = writeln!(out, "{},{},{},{:.6},{:.6},{:.6}", c.category, c.name, c.n_gt, c.ap, c.ap50, c.ap75);
    }
    let _ = writeln!(out, "all,all,,{:.6},{:.6},{:.6}", summary.ap, summary.ap50, summary.ap75);
    out
}
