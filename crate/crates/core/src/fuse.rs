//! Fusion of chip-level and whole-image detections into one result per image.
//!
//! Chip detections are moved into image coordinates, pieces of objects cut by
//! a chip border are merged back together, duplicates are suppressed with
//! per-class NMS, and the result is capped by score.

use serde::{Deserialize, Serialize};

use crate::dataset::Detection;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, ImageDims};

/// Where a chip sits in its parent image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipOrigin {
    pub image_id: u64,
    /// Chip top-left corner in image pixels.
    pub offset: (f64, f64),
    pub chip_dims: ImageDims,
    pub image_dims: ImageDims,
}

impl ChipOrigin {
    /// Origin of a chip cut out at `window`.
    pub fn from_window(image_id: u64, window: &BBox, image_dims: ImageDims) -> Self {
        Self {
            image_id,
            offset: (window.x, window.y),
            chip_dims: ImageDims::new(window.w, window.h),
            image_dims,
        }
    }

    pub fn window(&self) -> BBox {
        BBox::new(self.offset.0, self.offset.1, self.chip_dims.width, self.chip_dims.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseConfig {
    /// Detections kept per chip before fusion.
    pub peaks_per_chip: usize,
    /// Detections kept per image after fusion.
    pub max_detections: usize,
    pub nms_iou: f64,
    /// Distance in pixels within which a box side counts as lying on a chip edge.
    pub boundary_delta: f64,
    /// Required overlap of the two parts along the edge, relative to the shorter part.
    pub boundary_overlap: f64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            peaks_per_chip: 100,
            max_detections: 500,
            nms_iou: 0.5,
            boundary_delta: 2.0,
            boundary_overlap: 0.5,
        }
    }
}

impl FuseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.peaks_per_chip == 0 || self.max_detections == 0 {
            return Err(Error::InvalidConfig("detection limits must be at least 1".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::InvalidConfig(format!("nms_iou must lie in (0, 1), got {}", self.nms_iou)));
        }
        if self.boundary_delta.is_nan() || self.boundary_delta < 0.0 {
            return Err(Error::InvalidConfig("boundary_delta must be non-negative".into()));
        }
        if !(self.boundary_overlap > 0.0 && self.boundary_overlap <= 1.0) {
            return Err(Error::InvalidConfig("boundary_overlap must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Moves chip-local detections into image coordinates, clipping them to the image.
pub fn chip_to_global(dets: &[Detection], origin: &ChipOrigin) -> Vec<Detection> {
    dets.iter()
        .filter_map(|d| {
            let b = d.bbox.translate(origin.offset.0, origin.offset.1);
            b.clamp_to(origin.image_dims).map(|bbox| Detection { bbox, ..*d })
        })
        .collect()
}

/// Indices by descending score; equal scores keep input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy per-class suppression: a detection survives if its IoU with every
/// kept detection of the same class is at most `iou_thresh`.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets) {
        let d = dets[i];
        if kept
            .iter()
            .filter(|k| k.category == d.category)
            .all(|k| iou(&k.bbox, &d.bbox) <= iou_thresh)
        {
            kept.push(d);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeAxis {
    /// Edge along `x = pos`.
    Vertical,
    /// Edge along `y = pos`.
    Horizontal,
}

/// A chip border segment in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipEdge {
    pub axis: EdgeAxis,
    pub pos: f64,
    pub start: f64,
    pub end: f64,
}

/// Interior borders of the given chips; borders on the image boundary cannot cut objects.
pub fn chip_edges(origins: &[ChipOrigin]) -> Vec<ChipEdge> {
    let mut edges = Vec::new();
    for o in origins {
        let w = o.window();
        let dims = o.image_dims;
        for pos in [w.x, w.right()] {
            if pos > 0.0 && pos < dims.width {
                edges.push(ChipEdge {
                    axis: EdgeAxis::Vertical,
                    pos,
                    start: w.y,
                    end: w.bottom(),
                });
            }
        }
        for pos in [w.y, w.bottom()] {
            if pos > 0.0 && pos < dims.height {
                edges.push(ChipEdge {
                    axis: EdgeAxis::Horizontal,
                    pos,
                    start: w.x,
                    end: w.right(),
                });
            }
        }
    }
    edges
}

/// Box extent across the edge (`lo`, `hi`) and along it (`along_lo`, `along_hi`).
fn frame(b: &BBox, axis: EdgeAxis) -> (f64, f64, f64, f64) {
    match axis {
        EdgeAxis::Vertical => (b.x, b.right(), b.y, b.bottom()),
        EdgeAxis::Horizontal => (b.y, b.bottom(), b.x, b.right()),
    }
}

/// Whether `cut` looks like a piece truncated at `edge` whose remainder is
/// covered by `other`.
///
/// `cut` must end on the edge (within `delta`) from one side, `other` must
/// reach past the edge on the opposite side while starting no earlier than
/// `cut` does, and the two must overlap along the edge by at least `min_overlap`
/// of the shorter extent.
fn split_pair(cut: &BBox, other: &BBox, edge: &ChipEdge, delta: f64, min_overlap: f64) -> bool {
    let (c_lo, c_hi, c_a0, c_a1) = frame(cut, edge.axis);
    let (o_lo, o_hi, o_a0, o_a1) = frame(other, edge.axis);
    let e = edge.pos;
    if c_a1 <= edge.start || c_a0 >= edge.end {
        return false;
    }
    let before = (c_hi - e).abs() <= delta && c_lo < e - delta && o_hi > e + delta && o_lo <= e + delta && o_lo >= c_lo - delta;
    let after = (c_lo - e).abs() <= delta && c_hi > e + delta && o_lo < e - delta && o_hi >= e - delta && o_hi <= c_hi + delta;
    if !(before || after) {
        return false;
    }
    let shared = c_a1.min(o_a1) - c_a0.max(o_a0);
    let shorter = (c_a1 - c_a0).min(o_a1 - o_a0);
    shared > 0.0 && shared >= min_overlap * shorter
}

/// Merges same-class pieces of objects cut by chip borders into their union
/// box (score = max of the parts), repeating until no pair qualifies.
pub fn merge_split_boxes(dets: &[Detection], edges: &[ChipEdge], cfg: &FuseConfig) -> Vec<Detection> {
    let mut out = dets.to_vec();
    let touches = |b: &BBox, e: &ChipEdge| {
        let (lo, hi, a0, a1) = frame(b, e.axis);
        ((hi - e.pos).abs() <= cfg.boundary_delta || (lo - e.pos).abs() <= cfg.boundary_delta)
            && a1 > e.start
            && a0 < e.end
    };
    'search: loop {
        for i in 0..out.len() {
            for edge in edges.iter().filter(|e| touches(&out[i].bbox, e)) {
                for j in 0..out.len() {
                    if i == j || out[i].category != out[j].category {
                        continue;
                    }
                    if split_pair(&out[i].bbox, &out[j].bbox, edge, cfg.boundary_delta, cfg.boundary_overlap) {
                        let merged = Detection {
                            bbox: out[i].bbox.union_box(&out[j].bbox),
                            category: out[i].category,
                            score: out[i].score.max(out[j].score),
                        };
                        let (lo, hi) = (i.min(j), i.max(j));
                        out.remove(hi);
                        out[lo] = merged;
                        continue 'search;
                    }
                }
            }
        }
        break;
    }
    out
}

/// Fuses one image's chip results with its whole-image results.
pub fn fuse(
    chip_results: &[(ChipOrigin, Vec<Detection>)],
    global_results: &[Detection],
    image_dims: ImageDims,
    cfg: &FuseConfig,
) -> Vec<Detection> {
    let mut all = Vec::new();
    for (origin, dets) in chip_results {
        let top: Vec<Detection> = score_order(dets)
            .into_iter()
            .take(cfg.peaks_per_chip)
            .map(|i| dets[i])
            .collect();
        all.extend(chip_to_global(&top, origin));
    }
    all.extend(
        global_results
            .iter()
            .filter_map(|d| d.bbox.clamp_to(image_dims).map(|bbox| Detection { bbox, ..*d })),
    );
    let origins: Vec<ChipOrigin> = chip_results.iter().map(|(o, _)| *o).collect();
    let merged = merge_split_boxes(&all, &chip_edges(&origins), cfg);
    let mut kept = nms(&merged, cfg.nms_iou);
    kept.truncate(cfg.max_detections);
    kept
}

/// Raw detector output for one image: per-chip detections in chip
/// coordinates plus whole-image detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageChipResults {
    pub image_id: u64,
    pub width: f64,
    pub height: f64,
    pub chips: Vec<ChipResult>,
    #[serde(default)]
    pub global: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipResult {
    /// Chip placement in image coordinates.
    pub window: BBox,
    pub detections: Vec<Detection>,
}

impl ImageChipResults {
    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width, self.height)
    }

    pub fn fuse(&self, cfg: &FuseConfig) -> Vec<Detection> {
        let dims = self.dims();
        let chips: Vec<(ChipOrigin, Vec<Detection>)> = self
            .chips
            .iter()
            .map(|c| (ChipOrigin::from_window(self.image_id, &c.window, dims), c.detections.clone()))
            .collect();
        fuse(&chips, &self.global, dims, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64, c: u32, s: f64) -> Detection {
        Detection::new(BBox::new(x, y, w, h), c, s)
    }

    fn origin(x: f64, y: f64, w: f64, h: f64) -> ChipOrigin {
        ChipOrigin {
            image_id: 1,
            offset: (x, y),
            chip_dims: ImageDims::new(w, h),
            image_dims: ImageDims::new(1000.0, 800.0),
        }
    }

    #[test]
    fn translation_and_clamp() {
        let o = origin(600.0, 400.0, 400.0, 400.0);
        let g = chip_to_global(&[det(10.0, 20.0, 50.0, 40.0, 1, 0.5)], &o);
        assert_eq!(g[0].bbox, BBox::new(610.0, 420.0, 50.0, 40.0));
        let id = origin(0.0, 0.0, 400.0, 400.0);
        let d = det(3.0, 4.0, 5.0, 6.0, 1, 0.5);
        assert_eq!(chip_to_global(&[d], &id), vec![d]);
        let g = chip_to_global(&[det(380.0, 390.0, 50.0, 40.0, 1, 0.5)], &o);
        assert_eq!(g[0].bbox, BBox::new(980.0, 790.0, 20.0, 10.0));
        assert!(chip_to_global(&[det(420.0, 0.0, 5.0, 5.0, 1, 0.5)], &o).is_empty());
    }

    #[test]
    fn nms_examples() {
        let a = det(0.0, 0.0, 10.0, 10.0, 1, 0.9);
        let b = det(0.0, 0.0, 10.0, 10.0, 1, 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
        let c = det(0.0, 0.0, 10.0, 10.0, 2, 0.8);
        assert_eq!(nms(&[a, c], 0.5).len(), 2);
    }

    #[test]
    fn nms_chain_trace() {
        let t = 0.4;
        let a = det(0.0, 0.0, 10.0, 10.0, 1, 0.9);
        let b = det(3.5, 0.0, 10.0, 10.0, 1, 0.8);
        let c = det(7.0, 0.0, 10.0, 10.0, 1, 0.7);
        assert!(iou(&a.bbox, &b.bbox) > t);
        assert!(iou(&b.bbox, &c.bbox) > t);
        assert!(iou(&a.bbox, &c.bbox) < t);
        assert_eq!(nms(&[c, b, a], t), vec![a, c]);
    }

    #[test]
    fn split_halves_merge() {
        let edges = [ChipEdge {
            axis: EdgeAxis::Vertical,
            pos: 500.0,
            start: 0.0,
            end: 800.0,
        }];
        let cfg = FuseConfig::default();
        let l = det(460.0, 100.0, 40.0, 30.0, 4, 0.7);
        let r = det(500.0, 100.0, 38.0, 30.0, 4, 0.9);
        let m = merge_split_boxes(&[l, r], &edges, &cfg);
        assert_eq!(m, vec![det(460.0, 100.0, 78.0, 30.0, 4, 0.9)]);

        let r2 = det(500.0, 100.0, 38.0, 30.0, 5, 0.9);
        assert_eq!(merge_split_boxes(&[l, r2], &edges, &cfg).len(), 2);

        let r3 = det(500.0, 200.0, 38.0, 30.0, 4, 0.9);
        assert_eq!(merge_split_boxes(&[l, r3], &edges, &cfg).len(), 2);
    }

    #[test]
    fn overlapping_chip_pieces_merge() {
        // object (480, 300, 40, 20) cut by chip A ending at x=500 and chip B starting at x=490
        let edges = chip_edges(&[origin(0.0, 0.0, 500.0, 800.0), origin(490.0, 0.0, 510.0, 800.0)]);
        let a = det(480.0, 300.0, 20.0, 20.0, 1, 1.0);
        let b = det(490.0, 300.0, 30.0, 20.0, 1, 1.0);
        let m = merge_split_boxes(&[a, b], &edges, &FuseConfig::default());
        assert_eq!(m, vec![det(480.0, 300.0, 40.0, 20.0, 1, 1.0)]);
    }

    #[test]
    fn corner_pieces_merge_transitively() {
        let edges = [
            ChipEdge { axis: EdgeAxis::Vertical, pos: 500.0, start: 0.0, end: 800.0 },
            ChipEdge { axis: EdgeAxis::Horizontal, pos: 400.0, start: 0.0, end: 1000.0 },
        ];
        let parts = [
            det(490.0, 390.0, 10.0, 10.0, 1, 1.0),
            det(500.0, 390.0, 10.0, 10.0, 1, 1.0),
            det(490.0, 400.0, 10.0, 10.0, 1, 1.0),
            det(500.0, 400.0, 10.0, 10.0, 1, 1.0),
        ];
        let m = merge_split_boxes(&parts, &edges, &FuseConfig::default());
        assert_eq!(m, vec![det(490.0, 390.0, 20.0, 20.0, 1, 1.0)]);
    }

    #[test]
    fn edges_skip_image_border() {
        let e = chip_edges(&[origin(0.0, 0.0, 500.0, 800.0)]);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].pos, 500.0);
    }

    #[test]
    fn fuse_caps_and_dedups() {
        let cfg = FuseConfig::default();
        let dims = ImageDims::new(1000.0, 800.0);
        let chip = origin(0.0, 0.0, 400.0, 400.0);
        let dets = vec![det(10.0, 10.0, 20.0, 20.0, 1, 0.9), det(11.0, 10.0, 20.0, 20.0, 1, 0.8)];
        assert_eq!(fuse(&[(chip, dets.clone())], &[], dims, &cfg), nms(&dets, 0.5));

        let other = origin(5.0, 0.0, 400.0, 400.0);
        let local = vec![det(5.0, 10.0, 20.0, 20.0, 1, 0.85)];
        let out = fuse(&[(chip, dets[..1].to_vec()), (other, local)], &[], dims, &cfg);
        assert_eq!(out.len(), 1);

        let many: Vec<Detection> = (0..600)
            .map(|i| det((i % 30) as f64 * 30.0, (i / 30) as f64 * 30.0, 10.0, 10.0, 1, i as f64 / 600.0))
            .collect();
        let out = fuse(&[], &many, dims, &cfg);
        assert_eq!(out.len(), 500);
        assert!(out.iter().all(|d| d.score >= 100.0 / 600.0));
    }

    #[test]
    fn config_checks() {
        FuseConfig::default().validate().unwrap();
        assert!(FuseConfig { nms_iou: 1.0, ..Default::default() }.validate().is_err());
        assert!(FuseConfig { max_detections: 0, ..Default::default() }.validate().is_err());
    }
}
