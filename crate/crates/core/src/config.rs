//! Whole-run configuration: one JSON document with a section per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, LabelTree};
use crate::error::Result;
use crate::eval::EvalConfig;
use crate::fuse::FuseConfig;
use crate::heatmap::HeatmapConfig;
use crate::loss::LossConfig;
use crate::mrm::MrmConfig;
use crate::nmm::NmmConfig;
use crate::refine::RefineConfig;
use crate::synth::{OracleConfig, SceneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Label tree file; the visDrone tree when absent.
    pub label_tree: Option<String>,
    /// visDrone category ids whose instances are flagged ignore on load.
    pub ignore_categories: Vec<u32>,
    pub nmm: NmmConfig,
    pub refine: RefineConfig,
    pub heatmap: HeatmapConfig,
    pub loss: LossConfig,
    pub fuse: FuseConfig,
    pub eval: EvalConfig,
    pub mrm: MrmConfig,
    pub scene: SceneConfig,
    pub oracle: OracleConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            label_tree: None,
            ignore_categories: crate::dataset::VisdroneOptions::default().ignore_categories,
            nmm: NmmConfig::default(),
            refine: RefineConfig::default(),
            heatmap: HeatmapConfig::default(),
            loss: LossConfig::default(),
            fuse: FuseConfig::default(),
            eval: EvalConfig::default(),
            mrm: MrmConfig::default(),
            scene: SceneConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        self.nmm.validate()?;
        self.refine.validate()?;
        self.heatmap.validate()?;
        self.loss.validate()?;
        self.fuse.validate()?;
        self.eval.validate()?;
        self.mrm.validate()?;
        self.scene.validate()?;
        self.oracle.validate()
    }

    /// The configured label tree, or the visDrone tree.
    pub fn label_tree(&self) -> Result<LabelTree> {
        match &self.label_tree {
            Some(p) => LabelTree::load(Path::new(p)),
            None => Ok(crate::dataset::visdrone_label_tree()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let mut cfg = PipelineConfig::default();
        cfg.nmm.tau = 0.7;
        cfg.save(&p).unwrap();
        assert_eq!(PipelineConfig::load(&p).unwrap(), cfg);

        let bad: std::result::Result<PipelineConfig, _> = serde_json::from_str(r#"{"nmm": {"tua": 0.5}}"#);
        assert!(bad.is_err());
        let partial: PipelineConfig = serde_json::from_str(r#"{"nmm": {"tau": 0.5}}"#).unwrap();
        assert_eq!(partial.nmm.w_b, 512.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"nmm": {"tau": 1.5}}"#).unwrap();
        assert!(cfg.validate().unwrap_err().is_usage());
    }
}
