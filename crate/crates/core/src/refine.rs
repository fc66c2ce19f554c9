//! Position refinement of predicted cluster candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::nmm::ClusterJson;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCandidate {
    pub window: BBox,
    pub score: f64,
}

impl ClusterCandidate {
    pub fn new(window: BBox, score: f64) -> Self {
        Self { window, score }
    }
}

impl From<&ClusterJson> for ClusterCandidate {
    fn from(c: &ClusterJson) -> Self {
        Self::new(c.window(), c.score.unwrap_or(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Candidates kept per image before refinement.
    pub topk: usize,
    /// Maximum IoU allowed between two kept windows.
    pub pr_overlap: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            topk: 10,
            pr_overlap: 0.5,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topk == 0 {
            return Err(Error::InvalidConfig("topk must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.pr_overlap) {
            return Err(Error::InvalidConfig(format!(
                "pr_overlap must lie in [0, 1), got {}",
                self.pr_overlap
            )));
        }
        Ok(())
    }
}

/// Indices sorted by descending score; equal scores keep input order.
fn by_score(candidates: &[ClusterCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score));
    order
}

/// The `k` highest-scoring candidates, best first.
pub fn take_topk(candidates: &[ClusterCandidate], k: usize) -> Vec<ClusterCandidate> {
    by_score(candidates)
        .into_iter()
        .take(k)
        .map(|i| candidates[i])
        .collect()
}

/// Greedily keeps candidates, best first, whose window overlaps every
/// previously kept window by at most `pr_overlap` IoU.
pub fn position_refinement(candidates: &[ClusterCandidate], pr_overlap: f64) -> Vec<ClusterCandidate> {
    let mut kept: Vec<ClusterCandidate> = Vec::new();
    for i in by_score(candidates) {
        let c = candidates[i];
        if kept.iter().all(|k| iou(&k.window, &c.window) <= pr_overlap) {
            kept.push(c);
        }
    }
    kept
}

/// `take_topk` followed by `position_refinement`.
pub fn refine(candidates: &[ClusterCandidate], cfg: &RefineConfig) -> Vec<ClusterCandidate> {
    position_refinement(&take_topk(candidates, cfg.topk), cfg.pr_overlap)
}

/// The dense-candidate layout used as a reference example: five well separated
/// sites, each predicted twice with a 40 px horizontal shift, for ten
/// candidates in all. Refinement at the default overlap keeps one per site.
pub fn dense_candidate_fixture() -> Vec<ClusterCandidate> {
    let sites = [
        (300.0, 300.0),
        (1000.0, 250.0),
        (1700.0, 350.0),
        (600.0, 1100.0),
        (1400.0, 1150.0),
    ];
    let mut out = Vec::with_capacity(10);
    for (i, &(cx, cy)) in sites.iter().enumerate() {
        let score = 0.95 - 0.05 * i as f64;
        out.push(ClusterCandidate::new(BBox::from_center(cx, cy, 512.0, 512.0), score));
        out.push(ClusterCandidate::new(
            BBox::from_center(cx + 40.0, cy + 10.0, 512.0, 512.0),
            score - 0.3,
        ));
    }
    out
}
