//! Synthetic aerial-style scenes and an oracle detector.

use image::{Rgb, RgbImage};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{visdrone, Detection, ImageRecord, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, ImageDims};
use crate::mrm::image_seed;

/// Attempts per object before a scene is declared infeasible.
const PLACEMENT_RETRIES: usize = 200;
/// Largest IoU allowed between two generated objects.
const MAX_SCENE_IOU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: f64,
    pub height: f64,
    pub n_dense_clusters: usize,
    /// Inclusive range.
    pub objects_per_cluster: (usize, usize),
    /// Inclusive side-length range in pixels.
    pub small_size: (u32, u32),
    /// Standard deviation of object centers around their cluster center.
    pub cluster_spread: f64,
    pub n_large: usize,
    pub large_size: (u32, u32),
    /// `(category, weight)` pairs.
    pub class_weights: Vec<(u32, f64)>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 1024.0,
            height: 768.0,
            n_dense_clusters: 3,
            objects_per_cluster: (8, 24),
            small_size: (10, 40),
            cluster_spread: 40.0,
            n_large: 2,
            large_size: (100, 220),
            class_weights: (visdrone::PEDESTRIAN..=visdrone::MOTOR).map(|c| (c, 1.0)).collect(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scene: {m}")));
        if !self.dims().is_valid() {
            return bad("image size must be positive");
        }
        if self.objects_per_cluster.0 > self.objects_per_cluster.1
            || self.small_size.0 == 0
            || self.small_size.0 > self.small_size.1
            || self.large_size.0 == 0
            || self.large_size.0 > self.large_size.1
        {
            return bad("ranges must be non-empty with positive sizes");
        }
        if self.cluster_spread.is_nan() || self.cluster_spread < 0.0 {
            return bad("cluster_spread must be non-negative");
        }
        if self.class_weights.iter().any(|&(_, w)| w.is_nan() || w < 0.0) || self.class_weights.iter().map(|c| c.1).sum::<f64>() <= 0.0 {
            return bad("class weights must be non-negative with a positive sum");
        }
        Ok(())
    }
}

fn try_place(placed: &[BBox], b: &BBox, dims: ImageDims) -> bool {
    dims.as_box().contains(b) && placed.iter().all(|p| iou(p, b) <= MAX_SCENE_IOU)
}

/// Generates one annotated scene; the generator is seeded from `cfg.seed` and `image_id`.
pub fn generate_scene(cfg: &SceneConfig, image_id: u64) -> Result<ImageRecord> {
    cfg.validate()?;
    let dims = cfg.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, image_id));
    let classes = WeightedIndex::new(cfg.class_weights.iter().map(|c| c.1))
        .map_err(|e| Error::InvalidConfig(format!("scene: {e}")))?;
    let spread = Normal::new(0.0, cfg.cluster_spread).map_err(|e| Error::InvalidConfig(format!("scene: {e}")))?;
    let mut placed: Vec<BBox> = Vec::new();
    let mut annotations = Vec::new();
    let infeasible = |what: &str| Error::Infeasible(format!("could not place a {what} object in image {image_id}"));

    for _ in 0..cfg.n_dense_clusters {
        // centers stay two spreads away from the border when the image allows it
        let mx = (2.0 * cfg.cluster_spread).min(dims.width / 4.0);
        let my = (2.0 * cfg.cluster_spread).min(dims.height / 4.0);
        let (cx, cy) = (rng.random_range(mx..=dims.width - mx), rng.random_range(my..=dims.height - my));
        let n = rng.random_range(cfg.objects_per_cluster.0..=cfg.objects_per_cluster.1);
        for _ in 0..n {
            let ok = (0..PLACEMENT_RETRIES).find_map(|_| {
                let w = rng.random_range(cfg.small_size.0..=cfg.small_size.1) as f64;
                let h = rng.random_range(cfg.small_size.0..=cfg.small_size.1) as f64;
                let x = (cx + spread.sample(&mut rng) - w / 2.0).round();
                let y = (cy + spread.sample(&mut rng) - h / 2.0).round();
                let b = BBox::new(x, y, w, h);
                try_place(&placed, &b, dims).then_some(b)
            });
            let b = ok.ok_or_else(|| infeasible("small"))?;
            placed.push(b);
            annotations.push(ObjectAnnotation::new(b, cfg.class_weights[classes.sample(&mut rng)].0));
        }
    }
    for _ in 0..cfg.n_large {
        let ok = (0..PLACEMENT_RETRIES).find_map(|_| {
            let w = rng.random_range(cfg.large_size.0..=cfg.large_size.1) as f64;
            let h = rng.random_range(cfg.large_size.0..=cfg.large_size.1) as f64;
            if w > dims.width || h > dims.height {
                return None;
            }
            let x = rng.random_range(0..=(dims.width - w) as u64) as f64;
            let y = rng.random_range(0..=(dims.height - h) as u64) as f64;
            let b = BBox::new(x, y, w, h);
            try_place(&placed, &b, dims).then_some(b)
        });
        let b = ok.ok_or_else(|| infeasible("large"))?;
        placed.push(b);
        annotations.push(ObjectAnnotation::new(b, cfg.class_weights[classes.sample(&mut rng)].0));
    }

    let mut record = ImageRecord::new(image_id, dims);
    record.file_name = Some(format!("{image_id:06}.png"));
    record.annotations = annotations;
    Ok(record)
}

/// Draws every annotation as a filled rectangle on a gray background.
pub fn render_scene(record: &ImageRecord) -> RgbImage {
    let (w, h) = (record.dims.width as u32, record.dims.height as u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([96, 96, 96]));
    for a in &record.annotations {
        let c = a.category.wrapping_mul(2_654_435_761);
        let color = Rgb([(c >> 24) as u8 | 0x40, (c >> 16) as u8 | 0x40, (c >> 8) as u8 | 0x40]);
        let b = &a.bbox;
        for y in (b.y.max(0.0) as u32)..(b.bottom().min(h as f64) as u32) {
            for x in (b.x.max(0.0) as u32)..(b.right().min(w as f64) as u32) {
                img.put_pixel(x, y, color);
            }
        }
    }
    img
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Per-axis center noise in pixels.
    pub center_jitter_sd: f64,
    /// Relative size noise per side.
    pub size_jitter_sd: f64,
    pub miss_rate: f64,
    /// Expected false positives over a whole image; chips get an area-proportional share.
    pub fp_rate_per_image: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            center_jitter_sd: 0.0,
            size_jitter_sd: 0.0,
            miss_rate: 0.0,
            fp_rate_per_image: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_jitter_sd >= 0.0 && self.size_jitter_sd >= 0.0 && self.fp_rate_per_image >= 0.0) {
            return Err(Error::InvalidConfig("oracle noise levels must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::InvalidConfig("oracle miss_rate must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.center_jitter_sd == 0.0 && self.size_jitter_sd == 0.0 && self.miss_rate == 0.0 && self.fp_rate_per_image == 0.0
    }
}

/// Ground truth seen through a chip: boxes cropped to `chip` and expressed in
/// chip coordinates, perturbed per `cfg`. Ignore-flagged objects are never reported.
///
/// Scores are 1 without noise, otherwise `1 - (relative center shift + relative
/// size error)`, clamped to `[0.05, 1]`.
pub fn oracle_detect(record: &ImageRecord, chip: &BBox, cfg: &OracleConfig) -> Vec<Detection> {
    let seed = image_seed(
        image_seed(cfg.seed, record.id),
        chip.x.to_bits() ^ chip.y.to_bits().rotate_left(16) ^ chip.w.to_bits().rotate_left(32) ^ chip.h.to_bits().rotate_left(48),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Normal::new(0.0, cfg.center_jitter_sd.max(0.0)).expect("sd is non-negative");
    let size = Normal::new(0.0, cfg.size_jitter_sd.max(0.0)).expect("sd is non-negative");
    let mut out = Vec::new();

    for a in record.annotations.iter().filter(|a| !a.ignore) {
        if a.bbox.intersection(chip).is_none() {
            continue;
        }
        if cfg.miss_rate > 0.0 && rng.random::<f64>() < cfg.miss_rate {
            continue;
        }
        let (mut b, mut score) = (a.bbox, 1.0);
        if cfg.center_jitter_sd > 0.0 || cfg.size_jitter_sd > 0.0 {
            let (dx, dy) = (center.sample(&mut rng), center.sample(&mut rng));
            let (sw, sh) = (size.sample(&mut rng), size.sample(&mut rng));
            let (cx, cy) = b.center();
            let (w, h) = (b.w * (1.0 + sw).max(0.1), b.h * (1.0 + sh).max(0.1));
            b = BBox::from_center(cx + dx, cy + dy, w, h);
            let shift = dx.hypot(dy) / a.bbox.area().sqrt();
            score = (1.0 - shift - (sw.abs() + sh.abs()) / 2.0).clamp(0.05, 1.0);
        }
        if let Some(c) = b.intersection(chip) {
            out.push(Detection::new(c.translate(-chip.x, -chip.y), a.category, score));
        }
    }

    if cfg.fp_rate_per_image > 0.0 {
        let lambda = cfg.fp_rate_per_image * chip.area() / record.dims.as_box().area().max(1.0);
        let n = Poisson::new(lambda).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
        let categories: Vec<u32> = record.annotations.iter().map(|a| a.category).collect();
        for _ in 0..n {
            let w = rng.random_range(8.0..48.0f64).min(chip.w);
            let h = rng.random_range(8.0..48.0f64).min(chip.h);
            let x = rng.random_range(0.0..=chip.w - w);
            let y = rng.random_range(0.0..=chip.h - h);
            let category = if categories.is_empty() {
                visdrone::CAR
            } else {
                categories[rng.random_range(0..categories.len())]
            };
            out.push(Detection::new(BBox::new(x, y, w, h), category, rng.random_range(0.05..0.5)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_empty_scene() {
        let cfg = SceneConfig {
            n_dense_clusters: 0,
            n_large: 0,
            ..Default::default()
        };
        assert!(generate_scene(&cfg, 1).unwrap().annotations.is_empty());
    }

    #[test]
    fn scenes_are_seeded_and_contained() {
        let cfg = SceneConfig::default();
        let a = generate_scene(&cfg, 4).unwrap();
        assert_eq!(a, generate_scene(&cfg, 4).unwrap());
        assert_ne!(a, generate_scene(&cfg, 5).unwrap());
        assert!(a.annotations.iter().all(|x| a.dims.as_box().contains(&x.bbox)));
        assert!(!a.annotations.is_empty());
    }

    #[test]
    fn impossible_density_errors() {
        let cfg = SceneConfig {
            width: 50.0,
            height: 50.0,
            objects_per_cluster: (40, 40),
            small_size: (20, 20),
            n_large: 0,
            ..Default::default()
        };
        assert!(matches!(generate_scene(&cfg, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn zero_noise_oracle_is_identity() {
        let rec = generate_scene(&SceneConfig::default(), 2).unwrap();
        let dets = oracle_detect(&rec, &rec.dims.as_box(), &OracleConfig::default());
        assert_eq!(dets.len(), rec.annotations.len());
        for (d, a) in dets.iter().zip(&rec.annotations) {
            assert_eq!((d.bbox, d.category, d.score), (a.bbox, a.category, 1.0));
        }
        let none = OracleConfig {
            miss_rate: 1.0,
            ..Default::default()
        };
        assert!(oracle_detect(&rec, &rec.dims.as_box(), &none).is_empty());
    }

    #[test]
    fn chip_view_is_cropped_and_local() {
        let mut rec = ImageRecord::new(1, ImageDims::new(200.0, 200.0));
        rec.annotations.push(ObjectAnnotation::new(BBox::new(90.0, 10.0, 20.0, 10.0), visdrone::CAR));
        let chip = BBox::new(100.0, 0.0, 100.0, 100.0);
        let d = oracle_detect(&rec, &chip, &OracleConfig::default());
        assert_eq!(d[0].bbox, BBox::new(0.0, 10.0, 10.0, 10.0));
    }
}
