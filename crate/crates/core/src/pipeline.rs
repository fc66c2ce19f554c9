//! Chip-then-fuse detection driven by the oracle detector.

use rayon::prelude::*;

use crate::dataset::{Detection, ImageDetections, ImageRecord};
use crate::error::Result;
use crate::fuse::{ChipResult, FuseConfig, ImageChipResults};
use crate::geometry::BBox;
use crate::nmm::{nmm, NmmConfig};
use crate::refine::{refine, ClusterCandidate, RefineConfig};
use crate::synth::{oracle_detect, OracleConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineStages {
    pub nmm: NmmConfig,
    /// When set, chips are limited to the refined top clusters.
    pub refine: Option<RefineConfig>,
    pub fuse: FuseConfig,
    pub oracle: OracleConfig,
}

impl PipelineStages {
    pub fn validate(&self) -> Result<()> {
        self.nmm.validate()?;
        if let Some(r) = &self.refine {
            r.validate()?;
        }
        self.fuse.validate()?;
        self.oracle.validate()
    }
}

/// Chip windows for one image: merged cluster windows, optionally refined.
/// Cluster score is its member count.
pub fn chip_windows(record: &ImageRecord, stages: &PipelineStages) -> Vec<BBox> {
    let clusters = nmm(&record.annotations, record.dims, &stages.nmm);
    match &stages.refine {
        None => clusters.iter().map(|c| c.window).collect(),
        Some(cfg) => {
            let cands: Vec<ClusterCandidate> = clusters
                .iter()
                .map(|c| ClusterCandidate::new(c.window, c.members.len() as f64))
                .collect();
            refine(&cands, cfg).into_iter().map(|c| c.window).collect()
        }
    }
}

/// Indices of annotations cut by a chip border (partly inside, partly outside a window).
pub fn straddling_objects(record: &ImageRecord, windows: &[BBox]) -> Vec<usize> {
    record
        .annotations
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            windows
                .iter()
                .any(|w| a.bbox.intersection_area(w) > 0.0 && !w.contains(&a.bbox))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Oracle output for every chip plus the whole-image pass on non-small objects.
pub fn chip_results(record: &ImageRecord, stages: &PipelineStages) -> ImageChipResults {
    let chips = chip_windows(record, stages)
        .into_iter()
        .map(|window| ChipResult {
            detections: oracle_detect(record, &window, &stages.oracle),
            window,
        })
        .collect();
    let mut large_only = record.clone();
    large_only.annotations.retain(|a| !stages.nmm.is_small(&a.bbox));
    ImageChipResults {
        image_id: record.id,
        width: record.dims.width,
        height: record.dims.height,
        chips,
        global: oracle_detect(&large_only, &record.dims.as_box(), &stages.oracle),
    }
}

/// [`chip_results`] followed by fusion.
pub fn detect_image(record: &ImageRecord, stages: &PipelineStages) -> Vec<Detection> {
    chip_results(record, stages).fuse(&stages.fuse)
}

/// [`detect_image`] over a dataset, in image order.
pub fn detect_dataset(records: &[ImageRecord], stages: &PipelineStages) -> Result<Vec<ImageDetections>> {
    stages.validate()?;
    Ok(records
        .par_iter()
        .map(|r| ImageDetections {
            image_id: r.id,
            detections: detect_image(r, stages),
        })
        .collect())
}
