//! Non-maximum merge: greedy grouping of small objects into fixed-size cluster windows.
//!
//! Boxes are visited top-left first. Each box not yet claimed seeds a window of
//! the configured size centered on it (shifted to stay inside the image), and
//! every remaining box whose area lies more than `tau` inside that window joins
//! the cluster. Windows never move once created, so clusters may overlap.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, ImageRecord, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{coverage, recenter, BBox, ImageDims};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmmConfig {
    /// Cluster window width in pixels.
    pub w_b: f64,
    /// Cluster window height in pixels.
    pub h_b: f64,
    /// Merge threshold on member coverage.
    pub tau: f64,
    /// Boxes with `max(w, h)` at most this many pixels are clustered.
    pub small_max_side: f64,
}

impl Default for NmmConfig {
    fn default() -> Self {
        Self {
            w_b: 512.0,
            h_b: 512.0,
            tau: 0.8,
            small_max_side: 96.0,
        }
    }
}

impl NmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_b > 0.0 && self.h_b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cluster size must be positive, got {}x{}",
                self.w_b, self.h_b
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.small_max_side.is_nan() || self.small_max_side <= 0.0 {
            return Err(Error::InvalidConfig("small_max_side must be positive".into()));
        }
        Ok(())
    }

    pub fn is_small(&self, b: &BBox) -> bool {
        b.max_side() <= self.small_max_side
    }
}

/// A cluster window and the annotation indices merged into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub window: BBox,
    /// Indices into the image's annotation list, in visiting order; the seed comes first.
    pub members: Vec<usize>,
    pub seed: usize,
}

/// Annotation indices ordered top edge first, then left edge, then input position.
pub fn sort_boxes(annotations: &[ObjectAnnotation]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..annotations.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (&annotations[a].bbox, &annotations[b].bbox);
        ba.y.total_cmp(&bb.y).then(ba.x.total_cmp(&bb.x))
    });
    order
}

/// Runs the merge over the non-ignored small annotations of one image.
pub fn nmm(annotations: &[ObjectAnnotation], dims: ImageDims, cfg: &NmmConfig) -> Vec<Cluster> {
    let order: Vec<usize> = sort_boxes(annotations)
        .into_iter()
        .filter(|&i| !annotations[i].ignore && cfg.is_small(&annotations[i].bbox))
        .collect();
    let mut visited = vec![false; annotations.len()];
    let mut clusters = Vec::new();

    for (pos, &seed) in order.iter().enumerate() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let window = recenter(annotations[seed].bbox.center(), cfg.w_b, cfg.h_b, dims);
        let mut members = vec![seed];
        for &j in &order[pos + 1..] {
            if !visited[j] && coverage(&annotations[j].bbox, &window) > cfg.tau {
                visited[j] = true;
                members.push(j);
            }
        }
        clusters.push(Cluster {
            window,
            members,
            seed,
        });
    }
    clusters
}

/// Cluster as stored on disk: center point plus window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub member_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ClusterJson {
    pub fn window(&self) -> BBox {
        BBox::from_center(self.cx, self.cy, self.w, self.h)
    }
}

impl From<&Cluster> for ClusterJson {
    fn from(c: &Cluster) -> Self {
        let (cx, cy) = c.window.center();
        Self {
            cx,
            cy,
            w: c.window.w,
            h: c.window.h,
            member_indices: c.members.clone(),
            seed_index: Some(c.seed),
            score: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageClusters {
    pub image_id: u64,
    pub clusters: Vec<ClusterJson>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub images: usize,
    pub total_clusters: usize,
    /// Number of images per cluster count.
    pub histogram: BTreeMap<usize, usize>,
}

/// On-disk cluster document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub images: Vec<ImageClusters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ClusterSummary>,
}

impl ClusterFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn summarize(images: &[ImageClusters]) -> ClusterSummary {
    let mut s = ClusterSummary {
        images: images.len(),
        ..Default::default()
    };
    for img in images {
        s.total_clusters += img.clusters.len();
        *s.histogram.entry(img.clusters.len()).or_default() += 1;
    }
    s
}

/// Cluster ground truth for a whole dataset, in record order.
pub fn generate_cluster_ground_truth(records: &[ImageRecord], cfg: &NmmConfig) -> Result<Vec<ImageClusters>> {
    cfg.validate()?;
    Ok(records
        .par_iter()
        .map(|r| ImageClusters {
            image_id: r.id,
            clusters: nmm(&r.annotations, r.dims, cfg).iter().map(ClusterJson::from).collect(),
        })
        .collect())
}
