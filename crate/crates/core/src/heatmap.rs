//! Dense training targets: class-center heatmap, per-object sizes and sub-cell offsets.
//!
//! The heatmap has one channel per base class followed by one per stacked
//! parent class. Every object is splatted into its base channel and, when it has
//! one, into its parent channel.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, ClassKind, ImageRecord, LabelTree};
use crate::error::{Error, Result};
use crate::geometry::ImageDims;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    /// Output stride between image pixels and heatmap cells.
    pub down_ratio: usize,
    /// IoU a corner-perturbed box must keep with the original; sets the kernel radius.
    pub gaussian_min_overlap: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            down_ratio: 4,
            gaussian_min_overlap: 0.7,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.down_ratio == 0 {
            return Err(Error::InvalidConfig("down_ratio must be at least 1".into()));
        }
        if !(self.gaussian_min_overlap > 0.0 && self.gaussian_min_overlap < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gaussian_min_overlap must lie in (0, 1), got {}",
                self.gaussian_min_overlap
            )));
        }
        Ok(())
    }
}

/// Heatmap grid size for an image: each axis padded up to a multiple of `down_ratio`.
pub fn grid_shape(dims: ImageDims, down_ratio: usize) -> (usize, usize) {
    let r = down_ratio as f64;
    ((dims.width / r).ceil() as usize, (dims.height / r).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTargetSet {
    /// Shape `(rows, cols, C + C_s)`, channel-last.
    pub heatmap: Array3<f64>,
    /// Object sizes `(w, h)` in pixels.
    pub sizes: Vec<[f64; 2]>,
    /// Sub-cell center offsets, each component in `[0, 1)`.
    pub offsets: Vec<[f64; 2]>,
    /// Peak cell `(px, py)` per object.
    pub peak_cells: Vec<[usize; 2]>,
    /// Base category per object.
    pub classes: Vec<u32>,
    pub down_ratio: usize,
    /// Unpadded image size; cells past it are padding.
    pub image_dims: ImageDims,
}

impl DenseTargetSet {
    pub fn n_objects(&self) -> usize {
        self.sizes.len()
    }

    pub fn cols(&self) -> usize {
        self.heatmap.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.heatmap.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.heatmap.shape()[2]
    }
}

/// Kernel radius (in cells) for a `box_w`×`box_h` box, at least 1.
///
/// Smallest of the three corner-perturbation radii that keep IoU with the
/// original box at `min_overlap`: both corners shifted together, both moved
/// inward, and both moved outward.
pub fn gaussian_radius(box_w: f64, box_h: f64, min_overlap: f64) -> f64 {
    let (w, h, m) = (box_w, box_h, min_overlap);
    let smaller_root = |a: f64, b: f64, c: f64| (b - (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);

    // (w - r)(h - r) / (2wh - (w - r)(h - r)) >= m
    let r1 = smaller_root(1.0, w + h, w * h * (1.0 - m) / (1.0 + m));
    // (w - 2r)(h - 2r) / wh >= m
    let r2 = smaller_root(4.0, 2.0 * (w + h), (1.0 - m) * w * h);
    // wh / ((w + 2r)(h + 2r)) >= m
    let a3 = 4.0 * m;
    let b3 = 2.0 * m * (w + h);
    let c3 = (m - 1.0) * w * h;
    let r3 = (-b3 + (b3 * b3 - 4.0 * a3 * c3).max(0.0).sqrt()) / (2.0 * a3);

    r1.min(r2).min(r3).max(1.0)
}

/// Unnormalized Gaussian weight at integer displacement `(dx, dy)` for a kernel of `radius` cells.
pub fn kernel_value(dx: i64, dy: i64, radius: usize) -> f64 {
    let sigma = (2 * radius + 1) as f64 / 6.0;
    (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()
}

fn draw_gaussian(heatmap: &mut Array3<f64>, channel: usize, cx: usize, cy: usize, radius: usize) {
    let (rows, cols) = (heatmap.shape()[0] as i64, heatmap.shape()[1] as i64);
    let r = radius as i64;
    let (cx, cy) = (cx as i64, cy as i64);
    for y in (cy - r).max(0)..=(cy + r).min(rows - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(cols - 1) {
            let v = kernel_value(x - cx, y - cy, radius);
            let cell = &mut heatmap[[y as usize, x as usize, channel]];
            if v > *cell {
                *cell = v;
            }
        }
    }
}

/// Builds the dense targets of one image.
///
/// Ignore-flagged objects and channel-less marker categories are skipped.
pub fn splat_targets(record: &ImageRecord, tree: &LabelTree, cfg: &HeatmapConfig) -> Result<DenseTargetSet> {
    cfg.validate()?;
    let r = cfg.down_ratio as f64;
    let (cols, rows) = grid_shape(record.dims, cfg.down_ratio);
    let mut heatmap = Array3::<f64>::zeros((rows, cols, tree.num_channels()));
    let mut out = DenseTargetSet {
        heatmap: Array3::zeros((0, 0, 0)),
        sizes: Vec::new(),
        offsets: Vec::new(),
        peak_cells: Vec::new(),
        classes: Vec::new(),
        down_ratio: cfg.down_ratio,
        image_dims: record.dims,
    };

    for ann in &record.annotations {
        if ann.ignore {
            continue;
        }
        let channel = match tree.resolve(ann.category) {
            Some(ClassKind::Base(c)) => c,
            Some(ClassKind::IgnoreOnly) => continue,
            _ => {
                return Err(Error::UnknownCategory {
                    context: format!("image {}", record.id),
                    id: ann.category,
                })
            }
        };
        let (cx, cy) = ann.bbox.center();
        if !(cx >= 0.0 && cx < record.dims.width && cy >= 0.0 && cy < record.dims.height) {
            return Err(Error::CenterOutsideImage {
                x: cx,
                y: cy,
                width: record.dims.width,
                height: record.dims.height,
            });
        }
        let (fx, fy) = (cx / r, cy / r);
        let (px, py) = (fx.floor() as usize, fy.floor() as usize);
        let radius = gaussian_radius(ann.bbox.w / r, ann.bbox.h / r, cfg.gaussian_min_overlap).floor() as usize;

        draw_gaussian(&mut heatmap, channel, px, py, radius);
        if let Some(parent) = tree.parent_of(ann.category).and_then(|p| tree.channel_of(p)) {
            draw_gaussian(&mut heatmap, parent, px, py, radius);
        }

        out.sizes.push([ann.bbox.w, ann.bbox.h]);
        out.offsets.push([fx - px as f64, fy - py as f64]);
        out.peak_cells.push([px, py]);
        out.classes.push(ann.category);
    }
    out.heatmap = heatmap;
    Ok(out)
}

/// Per-object metadata in a grid dump sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMeta {
    pub peak: [usize; 2],
    pub size: [f64; 2],
    pub offset: [f64; 2],
    pub category: u32,
}

/// JSON sidecar describing a `.bin` grid dump (little-endian `f32`, row-major, channel-last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    /// `[rows, cols, channels]`.
    pub shape: [usize; 3],
    pub dtype: String,
    pub down_ratio: usize,
    pub image_width: f64,
    pub image_height: f64,
    #[serde(default)]
    pub objects: Vec<ObjectMeta>,
}

pub const DUMP_DTYPE: &str = "f32-le";

fn dump_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    (prefix.with_extension("bin"), prefix.with_extension("json"))
}

/// Writes `<prefix>.bin` and `<prefix>.json`.
pub fn write_grid_dump(prefix: &Path, grid: &Array3<f64>, mut meta: DumpMeta) -> Result<()> {
    let (bin, json) = dump_paths(prefix);
    let s = grid.shape();
    meta.shape = [s[0], s[1], s[2]];
    meta.dtype = DUMP_DTYPE.to_string();
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    // iter() follows logical (row-major) order regardless of memory layout
    for &v in grid.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    write_json(&json, &meta)
}

pub fn read_grid_dump(prefix: &Path) -> Result<(Array3<f64>, DumpMeta)> {
    let (bin, json) = dump_paths(prefix);
    let meta: DumpMeta = read_json(&json)?;
    if meta.dtype != DUMP_DTYPE {
        return Err(Error::Data(format!("{}: unsupported dtype {}", json.display(), meta.dtype)));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let n: usize = meta.shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::ShapeMismatch(format!(
            "{}: expected {} bytes for shape {:?}, found {}",
            bin.display(),
            n * 4,
            meta.shape,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let grid = Array3::from_shape_vec((meta.shape[0], meta.shape[1], meta.shape[2]), data)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok((grid, meta))
}

pub fn write_targets(prefix: &Path, t: &DenseTargetSet) -> Result<()> {
    let objects = (0..t.n_objects())
        .map(|i| ObjectMeta {
            peak: t.peak_cells[i],
            size: t.sizes[i],
            offset: t.offsets[i],
            category: t.classes[i],
        })
        .collect();
    let meta = DumpMeta {
        shape: [0; 3],
        dtype: String::new(),
        down_ratio: t.down_ratio,
        image_width: t.image_dims.width,
        image_height: t.image_dims.height,
        objects,
    };
    write_grid_dump(prefix, &t.heatmap, meta)
}

pub fn read_targets(prefix: &Path) -> Result<DenseTargetSet> {
    let (heatmap, meta) = read_grid_dump(prefix)?;
    Ok(DenseTargetSet {
        heatmap,
        sizes: meta.objects.iter().map(|o| o.size).collect(),
        offsets: meta.objects.iter().map(|o| o.offset).collect(),
        peak_cells: meta.objects.iter().map(|o| o.peak).collect(),
        classes: meta.objects.iter().map(|o| o.category).collect(),
        down_ratio: meta.down_ratio,
        image_dims: ImageDims::new(meta.image_width, meta.image_height),
    })
}
