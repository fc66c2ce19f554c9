//! Peak extraction and box decoding from dense center-heatmap predictions.

use ndarray::Array3;

use crate::dataset::{ClassKind, Detection, LabelTree};
use crate::geometry::BBox;
use crate::heatmap::DenseTargetSet;

/// A heatmap local maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    pub score: f64,
}

/// Cells equal to the maximum of their in-bounds 3×3 neighborhood (per channel),
/// best `k` by score. Equal scores keep row-major `(y, x, channel)` scan order.
pub fn extract_peaks(heatmap: &Array3<f64>, k: usize) -> Vec<Peak> {
    let (rows, cols, chans) = heatmap.dim();
    let mut peaks = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            for c in 0..chans {
                let v = heatmap[[y, x, c]];
                let mut is_max = true;
                'nb: for ny in y.saturating_sub(1)..=(y + 1).min(rows - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(cols - 1) {
                        if heatmap[[ny, nx, c]] > v {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    peaks.push(Peak {
                        x,
                        y,
                        channel: c,
                        score: v,
                    });
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score));
    peaks.truncate(k);
    peaks
}

/// Turns peaks and their regressed sizes/offsets into base-class detections.
///
/// `sizes[i]` and `offsets[i]` belong to `peaks[i]`. Peaks on stacked channels
/// and peaks with a non-positive predicted size produce nothing.
pub fn decode_boxes(
    peaks: &[Peak],
    sizes: &[[f64; 2]],
    offsets: &[[f64; 2]],
    down_ratio: usize,
    tree: &LabelTree,
) -> Vec<Detection> {
    let r = down_ratio as f64;
    peaks
        .iter()
        .zip(sizes.iter().zip(offsets))
        .filter_map(|(p, (s, o))| {
            let category = tree.id_of_channel(p.channel)?;
            if !matches!(tree.resolve(category), Some(ClassKind::Base(_))) {
                return None;
            }
            if !(s[0] > 0.0 && s[1] > 0.0) {
                return None;
            }
            let cx = (p.x as f64 + o[0]) * r;
            let cy = (p.y as f64 + o[1]) * r;
            Some(Detection::new(BBox::from_center(cx, cy, s[0], s[1]), category, p.score))
        })
        .collect()
}

/// Dense network head: center heatmap plus per-cell size and offset maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    /// `(rows, cols, C + C_s)`.
    pub heatmap: Array3<f64>,
    /// `(rows, cols, 2)` holding `(w, h)` in pixels.
    pub sizes: Array3<f64>,
    /// `(rows, cols, 2)` holding sub-cell offsets.
    pub offsets: Array3<f64>,
    pub down_ratio: usize,
}

impl DenseHead {
    /// The head a perfect network would output for these targets: the target
    /// heatmap itself with sizes and offsets written at every peak cell.
    pub fn from_targets(t: &DenseTargetSet) -> Self {
        let (rows, cols, _) = t.heatmap.dim();
        let mut sizes = Array3::zeros((rows, cols, 2));
        let mut offsets = Array3::zeros((rows, cols, 2));
        for i in 0..t.n_objects() {
            let [px, py] = t.peak_cells[i];
            for d in 0..2 {
                sizes[[py, px, d]] = t.sizes[i][d];
                offsets[[py, px, d]] = t.offsets[i][d];
            }
        }
        Self {
            heatmap: t.heatmap.clone(),
            sizes,
            offsets,
            down_ratio: t.down_ratio,
        }
    }

    /// Top-`k` peaks with a positive score, decoded into detections.
    pub fn decode(&self, k: usize, tree: &LabelTree) -> Vec<Detection> {
        let peaks: Vec<Peak> = extract_peaks(&self.heatmap, k)
            .into_iter()
            .filter(|p| p.score > 0.0)
            .collect();
        let gather = |m: &Array3<f64>| -> Vec<[f64; 2]> {
            peaks.iter().map(|p| [m[[p.y, p.x, 0]], m[[p.y, p.x, 1]]]).collect()
        };
        decode_boxes(&peaks, &gather(&self.sizes), &gather(&self.offsets), self.down_ratio, tree)
    }
}
