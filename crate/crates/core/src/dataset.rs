//! Annotation data model, visDrone / COCO ingestion and the two-level label tree.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};

/// One named category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
}

impl ClassEntry {
    pub fn new(id: u32, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
        }
    }
}

/// How a category id resolves against a [`LabelTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    /// A trainable base category; the payload is its heatmap channel.
    Base(usize),
    /// A stacked parent category; the payload is its heatmap channel.
    Stacked(usize),
    /// A marker category (e.g. visDrone "ignored regions") that owns no channel.
    IgnoreOnly,
}

/// Base categories, stacked parent categories and the child→parent map.
///
/// Heatmap channels are laid out as `base[0..C]` followed by `stacked[0..C_s]`,
/// in declaration order. Category ids themselves are the dataset's own ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelTree {
    pub base: Vec<ClassEntry>,
    #[serde(default)]
    pub stacked: Vec<ClassEntry>,
    /// Categories recognized in annotations but never trained or evaluated as classes.
    #[serde(default)]
    pub ignored: Vec<ClassEntry>,
    #[serde(default)]
    pub parent_of: BTreeMap<u32, u32>,
}

impl LabelTree {
    pub fn num_base(&self) -> usize {
        self.base.len()
    }

    pub fn num_stacked(&self) -> usize {
        self.stacked.len()
    }

    /// `C + C_s`.
    pub fn num_channels(&self) -> usize {
        self.base.len() + self.stacked.len()
    }

    pub fn resolve(&self, id: u32) -> Option<ClassKind> {
        if let Some(i) = self.base.iter().position(|c| c.id == id) {
            return Some(ClassKind::Base(i));
        }
        if let Some(i) = self.stacked.iter().position(|c| c.id == id) {
            return Some(ClassKind::Stacked(self.base.len() + i));
        }
        if self.ignored.iter().any(|c| c.id == id) {
            return Some(ClassKind::IgnoreOnly);
        }
        None
    }

    /// Heatmap channel of a base or stacked category.
    pub fn channel_of(&self, id: u32) -> Option<usize> {
        match self.resolve(id)? {
            ClassKind::Base(c) | ClassKind::Stacked(c) => Some(c),
            ClassKind::IgnoreOnly => None,
        }
    }

    /// Category id owning a heatmap channel.
    pub fn id_of_channel(&self, channel: usize) -> Option<u32> {
        if channel < self.base.len() {
            Some(self.base[channel].id)
        } else {
            self.stacked.get(channel - self.base.len()).map(|c| c.id)
        }
    }

    pub fn is_base(&self, id: u32) -> bool {
        matches!(self.resolve(id), Some(ClassKind::Base(_)))
    }

    pub fn parent_of(&self, id: u32) -> Option<u32> {
        self.parent_of.get(&id).copied()
    }

    /// The parent if there is one, the category itself otherwise.
    pub fn group_of(&self, id: u32) -> u32 {
        self.parent_of(id).unwrap_or(id)
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.base
            .iter()
            .chain(&self.stacked)
            .chain(&self.ignored)
            .find(|c| c.id == id)
            .map(|c| c.name.as_str())
    }

    pub fn id_of_name(&self, name: &str) -> Option<u32> {
        self.base
            .iter()
            .chain(&self.stacked)
            .chain(&self.ignored)
            .find(|c| c.name == name)
            .map(|c| c.id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.is_empty() {
            return Err(Error::InvalidConfig("label tree needs at least one base class".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in self.base.iter().chain(&self.stacked).chain(&self.ignored) {
            if !seen.insert(c.id) {
                return Err(Error::InvalidConfig(format!(
                    "label tree reuses category id {}",
                    c.id
                )));
            }
        }
        for (&child, &parent) in &self.parent_of {
            if !self.is_base(child) {
                return Err(Error::InvalidConfig(format!(
                    "parent map key {child} is not a base class"
                )));
            }
            if !matches!(self.resolve(parent), Some(ClassKind::Stacked(_))) {
                return Err(Error::InvalidConfig(format!(
                    "parent map target {parent} is not a stacked class"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tree: LabelTree = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// visDrone category ids.
pub mod visdrone {
    pub const IGNORED_REGIONS: u32 = 0;
    pub const PEDESTRIAN: u32 = 1;
    pub const PEOPLE: u32 = 2;
    pub const BICYCLE: u32 = 3;
    pub const CAR: u32 = 4;
    pub const VAN: u32 = 5;
    pub const TRUCK: u32 = 6;
    pub const TRICYCLE: u32 = 7;
    pub const AWNING_TRICYCLE: u32 = 8;
    pub const BUS: u32 = 9;
    pub const MOTOR: u32 = 10;
    pub const OTHERS: u32 = 11;
    pub const HUMAN: u32 = 12;
    pub const VEHICLES: u32 = 13;
    pub const NON_MOTOR_VEHICLES: u32 = 14;
}

/// visDrone: 11 base classes (ids 1..=11), 3 stacked parents (ids 12..=14),
/// and "ignored regions" (id 0) as a channel-less marker.
pub fn visdrone_label_tree() -> LabelTree {
    use visdrone::*;
    let base = vec![
        ClassEntry::new(PEDESTRIAN, "pedestrian"),
        ClassEntry::new(PEOPLE, "people"),
        ClassEntry::new(BICYCLE, "bicycle"),
        ClassEntry::new(CAR, "car"),
        ClassEntry::new(VAN, "van"),
        ClassEntry::new(TRUCK, "truck"),
        ClassEntry::new(TRICYCLE, "tricycle"),
        ClassEntry::new(AWNING_TRICYCLE, "awning-tricycle"),
        ClassEntry::new(BUS, "bus"),
        ClassEntry::new(MOTOR, "motor"),
        ClassEntry::new(OTHERS, "others"),
    ];
    let stacked = vec![
        ClassEntry::new(HUMAN, "human"),
        ClassEntry::new(VEHICLES, "vehicles"),
        ClassEntry::new(NON_MOTOR_VEHICLES, "non-motor-vehicles"),
    ];
    let parent_of = [
        (PEDESTRIAN, HUMAN),
        (PEOPLE, HUMAN),
        (CAR, VEHICLES),
        (VAN, VEHICLES),
        (TRUCK, VEHICLES),
        (BUS, VEHICLES),
        (BICYCLE, NON_MOTOR_VEHICLES),
        (TRICYCLE, NON_MOTOR_VEHICLES),
        (AWNING_TRICYCLE, NON_MOTOR_VEHICLES),
        (MOTOR, NON_MOTOR_VEHICLES),
    ]
    .into_iter()
    .collect();
    LabelTree {
        base,
        stacked,
        ignored: vec![ClassEntry::new(IGNORED_REGIONS, "ignored-regions")],
        parent_of,
    }
}

/// UAVDT: car, bus, truck with no stacked classes.
pub fn uavdt_label_tree() -> LabelTree {
    LabelTree {
        base: vec![
            ClassEntry::new(1, "car"),
            ClassEntry::new(2, "truck"),
            ClassEntry::new(3, "bus"),
        ],
        stacked: Vec::new(),
        ignored: Vec::new(),
        parent_of: BTreeMap::new(),
    }
}

/// A ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub bbox: BBox,
    pub category: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<i32>,
    /// Excluded from training targets; unpenalized region at evaluation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ignore: bool,
}

impl ObjectAnnotation {
    pub fn new(bbox: BBox, category: u32) -> Self {
        Self {
            bbox,
            category,
            truncation: None,
            occlusion: None,
            ignore: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: Option<String>,
    pub dims: ImageDims,
    pub annotations: Vec<ObjectAnnotation>,
}

impl ImageRecord {
    pub fn new(id: u64, dims: ImageDims) -> Self {
        Self {
            id,
            file_name: None,
            dims,
            annotations: Vec::new(),
        }
    }

    /// File stem used to pair the record with masks and rasters.
    pub fn stem(&self) -> String {
        match &self.file_name {
            Some(name) => Path::new(name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| name.clone()),
            None => self.id.to_string(),
        }
    }
}

/// A scored box emitted by a detector or by fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub category: u32,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, category: u32, score: f64) -> Self {
        Self {
            bbox,
            category,
            score,
        }
    }
}

/// Options for [`load_visdrone`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisdroneOptions {
    /// Categories flagged ignore (excluded from targets, unpenalized in evaluation).
    pub ignore_categories: Vec<u32>,
    /// Drop ignore-flagged annotations entirely instead of keeping them flagged.
    pub drop_ignored: bool,
    /// Image size to use when neither a size sidecar nor the image file is found.
    pub default_dims: Option<ImageDims>,
}

impl Default for VisdroneOptions {
    fn default() -> Self {
        Self {
            ignore_categories: vec![visdrone::IGNORED_REGIONS, visdrone::OTHERS],
            drop_ignored: false,
            default_dims: None,
        }
    }
}

/// Name of the optional `{stem: [width, height]}` sidecar read by [`load_visdrone`].
pub const IMAGE_SIZES_FILE: &str = "image_sizes.json";

const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "pgm"];

/// Loads a visDrone-DET style directory.
///
/// `dir` is either the split root (holding `annotations/` and `images/`) or the
/// annotation directory itself. Image sizes come from `image_sizes.json`, then
/// from the image file header, then from `opts.default_dims`, and finally from
/// the extent of the annotations. Records are ordered by file name and numbered
/// from 1.
pub fn load_visdrone(dir: &Path, tree: &LabelTree, opts: &VisdroneOptions) -> Result<Vec<ImageRecord>> {
    let (ann_dir, img_dir) = if dir.join("annotations").is_dir() {
        (dir.join("annotations"), Some(dir.join("images")))
    } else {
        (dir.to_path_buf(), dir.parent().map(|p| p.join("images")))
    };
    let sizes = read_size_sidecar(&ann_dir)?
        .or(match dir.join(IMAGE_SIZES_FILE).is_file() {
            true => read_size_sidecar(dir)?,
            false => None,
        })
        .unwrap_or_default();

    let mut files: Vec<PathBuf> = fs::read_dir(&ann_dir)
        .map_err(|e| Error::io(&ann_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();

    let mut records = Vec::with_capacity(files.len());
    for (idx, path) in files.iter().enumerate() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            raw.push(parse_visdrone_line(line, path, lineno + 1, tree)?);
        }

        let image_file = img_dir.as_ref().and_then(|d| find_image(d, &stem));
        let dims = match sizes.get(&stem) {
            Some(&[w, h]) => ImageDims::new(w, h),
            None => match &image_file {
                Some(p) => {
                    let (w, h) = image::image_dimensions(p).map_err(|e| Error::Image {
                        path: p.clone(),
                        source: e,
                    })?;
                    ImageDims::new(w as f64, h as f64)
                }
                None => opts.default_dims.unwrap_or_else(|| extent_of(&raw)),
            },
        };
        if !dims.is_valid() {
            return Err(Error::Data(format!("{}: invalid image size", path.display())));
        }

        let file_name = image_file
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| format!("{stem}.jpg"));
        let mut record = ImageRecord {
            id: idx as u64 + 1,
            file_name: Some(file_name),
            dims,
            annotations: Vec::with_capacity(raw.len()),
        };
        for mut ann in raw {
            ann.ignore = opts.ignore_categories.contains(&ann.category);
            if ann.ignore && opts.drop_ignored {
                continue;
            }
            if let Some(b) = ann.bbox.clamp_to(dims) {
                ann.bbox = b;
                record.annotations.push(ann);
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Parses one `left,top,width,height,score,category,truncation,occlusion` line.
/// Zero-area boxes come back with non-positive size and are dropped by clamping.
fn parse_visdrone_line(line: &str, path: &Path, lineno: usize, tree: &LabelTree) -> Result<ObjectAnnotation> {
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg,
    };
    let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() == 9 && fields[8].is_empty() {
        fields.pop();
    }
    if fields.len() != 8 {
        return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
    }
    let mut v = [0i64; 8];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse()
            .map_err(|_| parse_err(format!("field {f:?} is not an integer")))?;
    }
    let category = u32::try_from(v[5]).map_err(|_| parse_err(format!("bad category {}", v[5])))?;
    match tree.resolve(category) {
        Some(ClassKind::Base(_)) | Some(ClassKind::IgnoreOnly) => {}
        _ => {
            return Err(Error::UnknownCategory {
                context: format!("{}:{}", path.display(), lineno),
                id: category,
            })
        }
    }
    Ok(ObjectAnnotation {
        bbox: BBox::new(v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64),
        category,
        truncation: Some(v[6] as i32),
        occlusion: Some(v[7] as i32),
        ignore: false,
    })
}

fn read_size_sidecar(dir: &Path) -> Result<Option<HashMap<String, [f64; 2]>>> {
    let path = dir.join(IMAGE_SIZES_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::json(&path, e))
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn extent_of(anns: &[ObjectAnnotation]) -> ImageDims {
    let w = anns.iter().map(|a| a.bbox.right()).fold(1.0, f64::max);
    let h = anns.iter().map(|a| a.bbox.bottom()).fold(1.0, f64::max);
    ImageDims::new(w, h)
}

/// COCO-style document (the subset this crate reads and writes).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    #[serde(default)]
    pub file_name: Option<String>,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iscrowd: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

/// Converts a COCO document into records, in `images` order.
pub fn records_from_coco(doc: &CocoDocument, tree: &LabelTree) -> Result<Vec<ImageRecord>> {
    let mut index = HashMap::with_capacity(doc.images.len());
    let mut records = Vec::with_capacity(doc.images.len());
    for img in &doc.images {
        let dims = ImageDims::new(img.width, img.height);
        if !dims.is_valid() {
            return Err(Error::Data(format!("image {} has invalid size", img.id)));
        }
        if index.insert(img.id, records.len()).is_some() {
            return Err(Error::Data(format!("duplicate image id {}", img.id)));
        }
        records.push(ImageRecord {
            id: img.id,
            file_name: img.file_name.clone(),
            dims,
            annotations: Vec::new(),
        });
    }
    for ann in &doc.annotations {
        let &slot = index.get(&ann.image_id).ok_or(Error::MissingImage {
            annotation_id: ann.id,
            image_id: ann.image_id,
        })?;
        let kind = tree.resolve(ann.category_id);
        if !matches!(kind, Some(ClassKind::Base(_)) | Some(ClassKind::IgnoreOnly)) {
            return Err(Error::UnknownCategory {
                context: format!("annotation {}", ann.id),
                id: ann.category_id,
            });
        }
        let ignore = ann
            .ignore
            .unwrap_or(ann.iscrowd == Some(1) || kind == Some(ClassKind::IgnoreOnly));
        let record = &mut records[slot];
        let [x, y, w, h] = ann.bbox;
        if let Some(bbox) = BBox::new(x, y, w, h).clamp_to(record.dims) {
            record.annotations.push(ObjectAnnotation {
                bbox,
                category: ann.category_id,
                truncation: ann.truncation,
                occlusion: ann.occlusion,
                ignore,
            });
        }
    }
    Ok(records)
}

/// Converts records into a COCO document. Annotation ids are assigned sequentially.
pub fn records_to_coco(records: &[ImageRecord], tree: &LabelTree) -> CocoDocument {
    let categories = tree
        .base
        .iter()
        .chain(&tree.ignored)
        .map(|c| CocoCategory {
            id: c.id,
            name: c.name.clone(),
            supercategory: tree
                .parent_of(c.id)
                .and_then(|p| tree.name_of(p))
                .map(str::to_owned),
        })
        .collect();
    let images = records
        .iter()
        .map(|r| CocoImage {
            id: r.id,
            file_name: r.file_name.clone(),
            width: r.dims.width,
            height: r.dims.height,
        })
        .collect();
    let annotations = records
        .iter()
        .flat_map(|r| r.annotations.iter().map(move |a| (r.id, a)))
        .enumerate()
        .map(|(i, (image_id, a))| CocoAnnotation {
            id: i as u64 + 1,
            image_id,
            category_id: a.category,
            bbox: a.bbox.into(),
            area: Some(a.bbox.area()),
            iscrowd: Some(0),
            truncation: a.truncation,
            occlusion: a.occlusion,
            ignore: Some(a.ignore),
        })
        .collect();
    CocoDocument {
        images,
        annotations,
        categories,
    }
}

pub fn load_coco(path: &Path, tree: &LabelTree) -> Result<Vec<ImageRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: CocoDocument = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    records_from_coco(&doc, tree)
}

pub fn save_coco(records: &[ImageRecord], tree: &LabelTree, path: &Path) -> Result<()> {
    let doc = records_to_coco(records, tree);
    write_json(path, &doc)
}

/// Loads either a COCO JSON file or a visDrone directory.
pub fn load_dataset(path: &Path, tree: &LabelTree, opts: &VisdroneOptions) -> Result<Vec<ImageRecord>> {
    if path.is_dir() {
        load_visdrone(path, tree, opts)
    } else {
        load_coco(path, tree)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Detections of one image as exchanged on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image_id: u64,
    pub detections: Vec<Detection>,
}

/// A flat COCO results entry, accepted as detector input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// Detections together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub images: Vec<ImageDetections>,
}

impl DetectionsFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DetectionsInput {
    Document(DetectionsFile),
    Grouped(Vec<ImageDetections>),
    Flat(Vec<CocoResult>),
}

/// Reads a [`DetectionsFile`], a bare list of per-image detections, or a flat
/// COCO results list. Images are returned in ascending id order.
pub fn load_detections(path: &Path) -> Result<Vec<ImageDetections>> {
    let input: DetectionsInput = read_json(path)?;
    let mut grouped: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    match input {
        DetectionsInput::Document(DetectionsFile { images: list, .. }) | DetectionsInput::Grouped(list) => {
            for item in list {
                grouped.entry(item.image_id).or_default().extend(item.detections);
            }
        }
        DetectionsInput::Flat(list) => {
            for r in list {
                let [x, y, w, h] = r.bbox;
                grouped
                    .entry(r.image_id)
                    .or_default()
                    .push(Detection::new(BBox::new(x, y, w, h), r.category_id, r.score));
            }
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(image_id, detections)| ImageDetections { image_id, detections })
        .collect())
}

pub fn save_detections(path: &Path, dets: &[ImageDetections]) -> Result<()> {
    write_json(path, &dets)
}
