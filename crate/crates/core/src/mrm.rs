//! Rare-object paste augmentation guided by a placement mask.
//!
//! Planning draws `(crop, box)` candidates from a seeded generator and keeps a
//! candidate only if its footprint is mostly mask-allowed, it barely overlaps
//! anything already in the image, and its size is plausible for its class
//! group. Compositing then copies the scaled crops into the raster.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, ImageRecord, LabelTree, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, ImageDims};

/// Per-pixel paste permission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRaster {
    pub width: u32,
    pub height: u32,
    /// Row-major, 1 = allowed.
    pub data: Vec<u8>,
}

impl MaskRaster {
    pub fn filled(width: u32, height: u32, allowed: bool) -> Self {
        Self {
            width,
            height,
            data: vec![u8::from(allowed); width as usize * height as usize],
        }
    }

    pub fn for_dims(dims: ImageDims, allowed: bool) -> Self {
        Self::filled(dims.width.round() as u32, dims.height.round() as u32, allowed)
    }

    /// Reads a PNG or PGM; any nonzero pixel is allowed.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma8();
        Ok(Self {
            width: gray.width(),
            height: gray.height(),
            data: gray.pixels().map(|p| u8::from(p.0[0] != 0)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_fn(self.width, self.height, |x, y| image::Luma([self.get(x, y) * 255]));
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width as f64, self.height as f64)
    }

    /// Marks the pixels under each box as allowed.
    pub fn add_boxes<'a>(&mut self, boxes: impl IntoIterator<Item = &'a BBox>) {
        for b in boxes {
            let (x0, y0, x1, y1) = self.pixel_span(b);
            for y in y0..y1 {
                for x in x0..x1 {
                    self.data[y as usize * self.width as usize + x as usize] = 1;
                }
            }
        }
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` covered by `b`, clipped to the raster.
    fn pixel_span(&self, b: &BBox) -> (u32, u32, u32, u32) {
        let clip = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
        (
            clip(b.x.floor(), self.width),
            clip(b.y.floor(), self.height),
            clip(b.right().ceil(), self.width),
            clip(b.bottom().ceil(), self.height),
        )
    }

    /// Fraction of the pixels under `b` that are allowed; 0 for an empty footprint.
    pub fn allowed_fraction(&self, b: &BBox) -> f64 {
        let (x0, y0, x1, y1) = self.pixel_span(b);
        let total = (x1 - x0) as usize * (y1 - y0) as usize;
        if total == 0 {
            return 0.0;
        }
        let mut allowed = 0usize;
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            allowed += self.data[row + x0 as usize..row + x1 as usize]
                .iter()
                .filter(|&&v| v != 0)
                .count();
        }
        allowed as f64 / total as f64
    }
}

/// Which categories feed the paste pool.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RarityRule {
    /// Categories with fewer instances than the median over present categories.
    #[default]
    BelowMedian,
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub crop_id: String,
    pub category: u32,
    pub width: u32,
    pub height: u32,
    pub source_image_id: u64,
    pub source_box: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_file: Option<String>,
}

impl PoolEntry {
    fn native_size(&self) -> f64 {
        (self.width as f64 * self.height as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub rule: RarityRule,
    pub entries: Vec<PoolEntry>,
}

impl PoolManifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Non-ignored instance count per base category.
pub fn category_counts(records: &[ImageRecord], tree: &LabelTree) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for a in records.iter().flat_map(|r| &r.annotations) {
        if !a.ignore && tree.is_base(a.category) {
            *counts.entry(a.category).or_insert(0) += 1;
        }
    }
    counts
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Categories selected by `rule`.
pub fn rare_categories(records: &[ImageRecord], tree: &LabelTree, rule: &RarityRule) -> Vec<u32> {
    match rule {
        RarityRule::Explicit(ids) => {
            let mut ids = ids.clone();
            ids.sort_unstable();
            ids.dedup();
            ids
        }
        RarityRule::BelowMedian => {
            let counts = category_counts(records, tree);
            let mut values: Vec<f64> = counts.values().map(|&c| c as f64).collect();
            match median(&mut values) {
                Some(m) => counts.iter().filter(|&(_, &c)| (c as f64) < m).map(|(&k, _)| k).collect(),
                None => Vec::new(),
            }
        }
    }
}

/// Collects every non-ignored instance of a rare category as a pool entry.
///
/// Returns the pool and any warnings.
pub fn build_object_pool(records: &[ImageRecord], tree: &LabelTree, rule: &RarityRule) -> (Vec<PoolEntry>, Vec<String>) {
    let mut warnings = Vec::new();
    if records.iter().all(|r| r.annotations.is_empty()) {
        warnings.push("dataset has no annotations; object pool is empty".to_string());
        return (Vec::new(), warnings);
    }
    let rare = rare_categories(records, tree, rule);
    if rare.is_empty() {
        warnings.push("no category qualifies as rare; object pool is empty".to_string());
    }
    let mut pool = Vec::new();
    for r in records {
        for (i, a) in r.annotations.iter().enumerate() {
            if a.ignore || !rare.contains(&a.category) {
                continue;
            }
            let (w, h) = (a.bbox.w.round().max(1.0) as u32, a.bbox.h.round().max(1.0) as u32);
            pool.push(PoolEntry {
                crop_id: format!("{}_{}", r.id, i),
                category: a.category,
                width: w,
                height: h,
                source_image_id: r.id,
                source_box: a.bbox,
                file: None,
                alpha_file: None,
            });
        }
    }
    (pool, warnings)
}

/// Copies the pixels under `b` (rounded to whole pixels) out of `raster`.
pub fn crop_pixels(raster: &RgbImage, b: &BBox) -> RgbImage {
    let x0 = (b.x.round().max(0.0) as u32).min(raster.width().saturating_sub(1));
    let y0 = (b.y.round().max(0.0) as u32).min(raster.height().saturating_sub(1));
    let w = (b.w.round().max(1.0) as u32).min(raster.width() - x0);
    let h = (b.h.round().max(1.0) as u32).min(raster.height() - y0);
    imageops::crop_imm(raster, x0, y0, w, h).to_image()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrmConfig {
    pub k: usize,
    /// Minimum allowed-pixel fraction of a paste footprint.
    pub rho: f64,
    /// Maximum IoU with any annotation or earlier paste.
    pub omega: f64,
    /// Relative tolerance around the reference object size.
    pub scale_jitter: f64,
    /// Attempts per requested paste.
    pub retry_factor: usize,
    pub rarity: RarityRule,
    /// Also allow pasting over existing annotation boxes.
    pub addon_gt_mask: bool,
}

impl Default for MrmConfig {
    fn default() -> Self {
        Self {
            k: 5,
            rho: 0.95,
            omega: 0.1,
            scale_jitter: 0.25,
            retry_factor: 100,
            rarity: RarityRule::BelowMedian,
            addon_gt_mask: false,
        }
    }
}

impl MrmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.retry_factor == 0 {
            return Err(Error::InvalidConfig("mrm k and retry_factor must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) || !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::InvalidConfig("mrm rho must be in (0, 1] and omega in [0, 1]".into()));
        }
        if !(self.scale_jitter >= 0.0 && self.scale_jitter < 1.0) {
            return Err(Error::InvalidConfig("mrm scale_jitter must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paste {
    pub crop_id: String,
    pub category: u32,
    pub position: BBox,
    /// Linear scale from the crop's native size to `position`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastePlan {
    pub image_id: u64,
    pub pastes: Vec<Paste>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Median `sqrt(w·h)` of non-ignored objects per parent group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SizeReference {
    pub per_group: BTreeMap<u32, f64>,
}

impl SizeReference {
    pub fn from_annotations<'a>(anns: impl IntoIterator<Item = &'a ObjectAnnotation>, tree: &LabelTree) -> Self {
        let mut sizes: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for a in anns {
            if !a.ignore && tree.is_base(a.category) {
                sizes.entry(tree.group_of(a.category)).or_default().push(a.bbox.area().sqrt());
            }
        }
        Self {
            per_group: sizes
                .into_iter()
                .filter_map(|(g, mut v)| median(&mut v).map(|m| (g, m)))
                .collect(),
        }
    }

    pub fn from_records(records: &[ImageRecord], tree: &LabelTree) -> Self {
        Self::from_annotations(records.iter().flat_map(|r| &r.annotations), tree)
    }
}

/// Reference size for `category`: this image's group median, else the
/// dataset's, else `fallback`.
pub fn reference_size(category: u32, local: &SizeReference, dataset: &SizeReference, tree: &LabelTree, fallback: f64) -> f64 {
    let g = tree.group_of(category);
    local
        .per_group
        .get(&g)
        .or_else(|| dataset.per_group.get(&g))
        .copied()
        .unwrap_or(fallback)
}

/// Mixes a run seed with an image id into a per-image seed.
pub fn image_seed(seed: u64, image_id: u64) -> u64 {
    let mut z = seed ^ image_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Why a paste fails the placement rules, if it does.
pub fn check_paste(
    paste: &BBox,
    reference: f64,
    mask: &MaskRaster,
    existing: &[BBox],
    cfg: &MrmConfig,
) -> Option<String> {
    let dims = mask.dims();
    if !dims.as_box().contains(paste) || paste.area() <= 0.0 {
        return Some("box outside the image".into());
    }
    let frac = mask.allowed_fraction(paste);
    if frac < cfg.rho {
        return Some(format!("mask coverage {frac:.3} below {}", cfg.rho));
    }
    if let Some(v) = existing.iter().map(|e| iou(paste, e)).find(|&v| v > cfg.omega) {
        return Some(format!("overlap IoU {v:.3} above {}", cfg.omega));
    }
    let size = paste.area().sqrt();
    let (lo, hi) = (reference * (1.0 - cfg.scale_jitter), reference * (1.0 + cfg.scale_jitter));
    if size < lo || size > hi {
        return Some(format!("size {size:.2} outside [{lo:.2}, {hi:.2}]"));
    }
    None
}

/// Plans up to `cfg.k` pastes into one image.
///
/// The mask must match the image size. Falling short of `k` is not an error:
/// one warning is recorded per missing paste.
pub fn plan_pastes(
    record: &ImageRecord,
    mask: &MaskRaster,
    pool: &[PoolEntry],
    dataset_sizes: &SizeReference,
    tree: &LabelTree,
    seed: u64,
    cfg: &MrmConfig,
) -> Result<PastePlan> {
    cfg.validate()?;
    let dims = record.dims;
    if (mask.width as f64, mask.height as f64) != (dims.width, dims.height) {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{} but image {} is {}x{}",
            mask.width, mask.height, record.id, dims.width, dims.height
        )));
    }
    let mut mask = mask.clone();
    if cfg.addon_gt_mask {
        mask.add_boxes(record.annotations.iter().map(|a| &a.bbox));
    }
    let local = SizeReference::from_annotations(&record.annotations, tree);
    let mut occupied: Vec<BBox> = record.annotations.iter().map(|a| a.bbox).collect();
    let mut pastes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if !pool.is_empty() {
        for _ in 0..cfg.k * cfg.retry_factor {
            if pastes.len() == cfg.k {
                break;
            }
            let entry = &pool[rng.random_range(0..pool.len())];
            let reference = reference_size(entry.category, &local, dataset_sizes, tree, entry.native_size());
            let target = reference * (1.0 + rng.random_range(-cfg.scale_jitter..=cfg.scale_jitter));
            let s = target / entry.native_size();
            let w = (entry.width as f64 * s).round().max(1.0);
            let h = (entry.height as f64 * s).round().max(1.0);
            if w > dims.width || h > dims.height {
                continue;
            }
            let x = rng.random_range(0..=(dims.width - w) as u64) as f64;
            let y = rng.random_range(0..=(dims.height - h) as u64) as f64;
            let b = BBox::new(x, y, w, h);
            if check_paste(&b, reference, &mask, &occupied, cfg).is_none() {
                occupied.push(b);
                pastes.push(Paste {
                    crop_id: entry.crop_id.clone(),
                    category: entry.category,
                    position: b,
                    scale: b.area().sqrt() / entry.native_size(),
                });
            }
        }
    }

    let warnings = (pastes.len()..cfg.k)
        .map(|i| {
            let why = if pool.is_empty() { "object pool is empty" } else { "retry budget exhausted" };
            format!("image {}: paste {} of {} not placed ({why})", record.id, i + 1, cfg.k)
        })
        .collect();
    Ok(PastePlan {
        image_id: record.id,
        pastes,
        warnings,
    })
}

/// Re-checks every paste of a plan; returns one message per violation.
pub fn verify_plan(
    record: &ImageRecord,
    mask: &MaskRaster,
    plan: &PastePlan,
    dataset_sizes: &SizeReference,
    tree: &LabelTree,
    cfg: &MrmConfig,
) -> Vec<String> {
    let mut mask = mask.clone();
    if cfg.addon_gt_mask {
        mask.add_boxes(record.annotations.iter().map(|a| &a.bbox));
    }
    let local = SizeReference::from_annotations(&record.annotations, tree);
    let mut occupied: Vec<BBox> = record.annotations.iter().map(|a| a.bbox).collect();
    let mut problems = Vec::new();
    if plan.pastes.len() > cfg.k {
        problems.push(format!("{} pastes exceed k = {}", plan.pastes.len(), cfg.k));
    }
    for p in &plan.pastes {
        let native = p.position.area().sqrt() / p.scale;
        let reference = reference_size(p.category, &local, dataset_sizes, tree, native);
        if let Some(why) = check_paste(&p.position, reference, &mask, &occupied, cfg) {
            problems.push(format!("{}: {why}", p.crop_id));
        }
        occupied.push(p.position);
    }
    problems
}

/// Pixels of one pool entry, with an optional footprint (nonzero = copy).
#[derive(Debug, Clone)]
pub struct CropImage {
    pub pixels: RgbImage,
    pub alpha: Option<GrayImage>,
}

/// Pastes the planned crops into `raster` and appends one annotation per paste.
///
/// Pastes whose crop is missing are skipped with a warning.
pub fn composite(
    raster: &RgbImage,
    record: &ImageRecord,
    plan: &PastePlan,
    crops: &HashMap<String, CropImage>,
) -> Result<(RgbImage, Vec<ObjectAnnotation>, Vec<String>)> {
    if (raster.width() as f64, raster.height() as f64) != (record.dims.width, record.dims.height) {
        return Err(Error::ShapeMismatch(format!(
            "raster is {}x{} but image {} is {}x{}",
            raster.width(),
            raster.height(),
            record.id,
            record.dims.width,
            record.dims.height
        )));
    }
    let mut out = raster.clone();
    let mut annotations = record.annotations.clone();
    let mut warnings = Vec::new();
    for p in &plan.pastes {
        let Some(crop) = crops.get(&p.crop_id) else {
            warnings.push(format!("image {}: crop {} has no pixels; paste skipped", record.id, p.crop_id));
            continue;
        };
        let (x0, y0) = (p.position.x as u32, p.position.y as u32);
        let (w, h) = (p.position.w as u32, p.position.h as u32);
        let scaled = imageops::resize(&crop.pixels, w, h, FilterType::Nearest);
        let alpha = crop.alpha.as_ref().map(|a| imageops::resize(a, w, h, FilterType::Nearest));
        for (x, y, px) in scaled.enumerate_pixels() {
            if alpha.as_ref().is_none_or(|a| a.get_pixel(x, y).0[0] != 0) {
                let (gx, gy) = (x0 + x, y0 + y);
                if gx < out.width() && gy < out.height() {
                    out.put_pixel(gx, gy, *px);
                }
            }
        }
        annotations.push(ObjectAnnotation::new(p.position, p.category));
    }
    Ok((out, annotations, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{visdrone, visdrone_label_tree};

    fn ann(x: f64, y: f64, w: f64, h: f64, c: u32) -> ObjectAnnotation {
        ObjectAnnotation::new(BBox::new(x, y, w, h), c)
    }

    fn dataset() -> Vec<ImageRecord> {
        let mut r = ImageRecord::new(1, ImageDims::new(400.0, 300.0));
        for i in 0..6 {
            r.annotations.push(ann(10.0 + 30.0 * i as f64, 10.0, 20.0, 12.0, visdrone::CAR));
        }
        r.annotations.push(ann(10.0, 100.0, 16.0, 10.0, visdrone::AWNING_TRICYCLE));
        r.annotations.push(ann(50.0, 100.0, 8.0, 16.0, visdrone::PEDESTRIAN));
        r.annotations.push(ann(80.0, 100.0, 8.0, 16.0, visdrone::PEDESTRIAN));
        vec![r]
    }

    #[test]
    fn below_median_pools_the_rare_classes() {
        let tree = visdrone_label_tree();
        // counts: car 6, pedestrian 2, awning-tricycle 1 -> median 2
        let (pool, warnings) = build_object_pool(&dataset(), &tree, &RarityRule::BelowMedian);
        assert!(warnings.is_empty());
        assert_eq!(pool.len(), 1);
        assert_eq!(pool[0].category, visdrone::AWNING_TRICYCLE);
        assert_eq!((pool[0].width, pool[0].height), (16, 10));
    }

    #[test]
    fn equal_counts_pool_nothing_by_default() {
        let tree = visdrone_label_tree();
        let mut r = ImageRecord::new(1, ImageDims::new(100.0, 100.0));
        r.annotations = vec![ann(0.0, 0.0, 5.0, 5.0, visdrone::CAR), ann(10.0, 0.0, 5.0, 5.0, visdrone::BUS)];
        let (pool, warnings) = build_object_pool(&[r.clone()], &tree, &RarityRule::BelowMedian);
        assert!(pool.is_empty());
        assert_eq!(warnings.len(), 1);
        let (pool, _) = build_object_pool(&[r], &tree, &RarityRule::Explicit(vec![visdrone::BUS]));
        assert_eq!(pool.len(), 1);
        let (pool, warnings) = build_object_pool(&[], &tree, &RarityRule::BelowMedian);
        assert!(pool.is_empty() && !warnings.is_empty());
    }

    #[test]
    fn mask_fraction_and_addon() {
        let mut m = MaskRaster::filled(10, 10, false);
        assert_eq!(m.allowed_fraction(&BBox::new(0.0, 0.0, 4.0, 4.0)), 0.0);
        m.add_boxes([&BBox::new(0.0, 0.0, 2.0, 4.0)]);
        assert_eq!(m.allowed_fraction(&BBox::new(0.0, 0.0, 4.0, 4.0)), 0.5);
    }

    #[test]
    fn plans_are_valid_and_seeded() {
        let tree = visdrone_label_tree();
        let data = dataset();
        let (pool, _) = build_object_pool(&data, &tree, &RarityRule::BelowMedian);
        let sizes = SizeReference::from_records(&data, &tree);
        let cfg = MrmConfig::default();
        let mask = MaskRaster::for_dims(data[0].dims, true);
        let a = plan_pastes(&data[0], &mask, &pool, &sizes, &tree, 7, &cfg).unwrap();
        assert_eq!(a.pastes.len(), 5);
        assert!(a.warnings.is_empty());
        assert!(verify_plan(&data[0], &mask, &a, &sizes, &tree, &cfg).is_empty());
        assert_eq!(a, plan_pastes(&data[0], &mask, &pool, &sizes, &tree, 7, &cfg).unwrap());
        assert_ne!(a, plan_pastes(&data[0], &mask, &pool, &sizes, &tree, 8, &cfg).unwrap());

        let closed = MaskRaster::for_dims(data[0].dims, false);
        let z = plan_pastes(&data[0], &closed, &pool, &sizes, &tree, 7, &cfg).unwrap();
        assert!(z.pastes.is_empty());
        assert_eq!(z.warnings.len(), 5);
    }

    #[test]
    fn mask_size_must_match() {
        let tree = visdrone_label_tree();
        let data = dataset();
        let mask = MaskRaster::filled(10, 10, true);
        let r = plan_pastes(&data[0], &mask, &[], &SizeReference::default(), &tree, 0, &MrmConfig::default());
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn composite_is_local() {
        let record = ImageRecord::new(3, ImageDims::new(20.0, 10.0));
        let raster = RgbImage::from_pixel(20, 10, image::Rgb([1, 2, 3]));
        let empty = PastePlan {
            image_id: 3,
            pastes: vec![],
            warnings: vec![],
        };
        let (same, anns, _) = composite(&raster, &record, &empty, &HashMap::new()).unwrap();
        assert_eq!(same, raster);
        assert!(anns.is_empty());

        let plan = PastePlan {
            pastes: vec![Paste {
                crop_id: "c".into(),
                category: visdrone::BUS,
                position: BBox::new(4.0, 2.0, 4.0, 4.0),
                scale: 2.0,
            }],
            ..empty
        };
        let mut crops = HashMap::new();
        crops.insert(
            "c".to_string(),
            CropImage {
                pixels: RgbImage::from_pixel(2, 2, image::Rgb([200, 0, 0])),
                alpha: None,
            },
        );
        let (out, anns, warnings) = composite(&raster, &record, &plan, &crops).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(anns.len(), 1);
        for (x, y, p) in out.enumerate_pixels() {
            let inside = (4..8).contains(&x) && (2..6).contains(&y);
            assert_eq!(*p, if inside { image::Rgb([200, 0, 0]) } else { image::Rgb([1, 2, 3]) });
        }
        let (_, anns, warnings) = composite(&raster, &record, &plan, &HashMap::new()).unwrap();
        assert!(anns.is_empty());
        assert_eq!(warnings.len(), 1);
    }
}
