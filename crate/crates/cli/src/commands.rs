use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clusterdet::config::PipelineConfig;
use clusterdet::dataset::{
    load_dataset, load_detections, save_coco, DetectionsFile, ImageDetections, ImageRecord, LabelTree, VisdroneOptions,
};
use clusterdet::eval::{ap_summary, per_category_csv, EvalSummary};
use clusterdet::fuse::ImageChipResults;
use clusterdet::heatmap::{read_targets, splat_targets, write_targets};
use clusterdet::loss::{evaluate, heatmap_grad_check, LossReport, Prediction};
use clusterdet::mrm::{
    build_object_pool, composite, crop_pixels, image_seed, plan_pastes, CropImage, MaskRaster, PastePlan, PoolManifest,
    SizeReference,
};
use clusterdet::nmm::{generate_cluster_ground_truth, summarize, ClusterFile, ClusterJson, ImageClusters};
use clusterdet::pipeline::{chip_results, PipelineStages};
use clusterdet::refine::{refine, ClusterCandidate};
use clusterdet::synth::{generate_scene, render_scene};
use clusterdet::{Error, Result};
use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::{Command, GlobalArgs};

const GRAD_CHECK_STEP: f64 = 1e-5;
const GRAD_CHECK_SAMPLES: usize = 256;

pub fn run(global: &GlobalArgs, command: Command) -> Result<()> {
    if let Some(jobs) = global.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        // only fails when a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut cfg = match &global.config {
        // a config that cannot be read is a caller mistake, not a data problem
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::InvalidConfig(_) => e,
            other => Error::InvalidConfig(other.to_string()),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.scene.seed = seed;
        cfg.oracle.seed = seed;
    }

    match command {
        Command::Nmm {
            dataset,
            tau,
            chip_width,
            chip_height,
            small_max_side,
        } => {
            set(&mut cfg.nmm.tau, tau);
            set(&mut cfg.nmm.w_b, chip_width);
            set(&mut cfg.nmm.h_b, chip_height);
            set(&mut cfg.nmm.small_max_side, small_max_side);
            cfg.validate()?;
            nmm(global, &cfg, &dataset)
        }
        Command::Refine {
            clusters,
            topk,
            pr_overlap,
        } => {
            set(&mut cfg.refine.topk, topk);
            set(&mut cfg.refine.pr_overlap, pr_overlap);
            cfg.validate()?;
            refine_clusters(global, &cfg, &clusters)
        }
        Command::Targets { dataset, down_ratio } => {
            set(&mut cfg.heatmap.down_ratio, down_ratio);
            cfg.validate()?;
            targets(global, &cfg, &dataset)
        }
        Command::LossCheck { target, pred } => {
            cfg.validate()?;
            loss_check(global, &cfg, &target, pred.as_deref())
        }
        Command::Fuse {
            chips,
            max_detections,
            nms_iou,
        } => {
            set(&mut cfg.fuse.max_detections, max_detections);
            set(&mut cfg.fuse.nms_iou, nms_iou);
            cfg.validate()?;
            fuse(global, &cfg, &chips)
        }
        Command::Eval {
            ground_truth,
            detections,
            csv,
        } => {
            cfg.validate()?;
            eval(global, &cfg, &ground_truth, &detections, csv.as_deref())
        }
        Command::MrmPlan { dataset, masks, pool, k } => {
            set(&mut cfg.mrm.k, k);
            cfg.validate()?;
            mrm_plan(global, &cfg, &dataset, masks.as_deref(), pool.as_deref())
        }
        Command::MrmComposite { dataset, plans, images } => {
            cfg.validate()?;
            mrm_composite(global, &cfg, &dataset, &plans, &images)
        }
        Command::Synth {
            count,
            render,
            detect,
            refine,
        } => {
            cfg.validate()?;
            synth(global, &cfg, count, render, detect, refine)
        }
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn config_value(cfg: &PipelineConfig) -> Value {
    serde_json::to_value(cfg).expect("configuration serializes")
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Writes JSON to `--out`, or to stdout.
fn emit<T: Serialize>(global: &GlobalArgs, value: &T) -> Result<()> {
    let text = to_json(value);
    match &global.out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_dir(global: &GlobalArgs) -> Result<PathBuf> {
    let dir = global
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("this command needs --out DIR".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_records(cfg: &PipelineConfig, path: &Path) -> Result<(Vec<ImageRecord>, LabelTree)> {
    let tree = cfg.label_tree()?;
    let opts = VisdroneOptions {
        ignore_categories: cfg.ignore_categories.clone(),
        ..Default::default()
    };
    let records = load_dataset(path, &tree, &opts)?;
    Ok((records, tree))
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn save_png<P, C>(path: &Path, img: &image::ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn nmm(global: &GlobalArgs, cfg: &PipelineConfig, dataset: &Path) -> Result<()> {
    let (records, _) = load_records(cfg, dataset)?;
    let images = generate_cluster_ground_truth(&records, &cfg.nmm)?;
    let summary = summarize(&images);
    log::info!("{} clusters over {} images", summary.total_clusters, summary.images);
    emit(
        global,
        &ClusterFile {
            config: Some(config_value(cfg)),
            images,
            summary: Some(summary),
        },
    )
}

fn refine_clusters(global: &GlobalArgs, cfg: &PipelineConfig, path: &Path) -> Result<()> {
    let input = ClusterFile::load(path)?;
    let images: Vec<ImageClusters> = input
        .images
        .iter()
        .map(|img| {
            let cands: Vec<ClusterCandidate> = img.clusters.iter().map(ClusterCandidate::from).collect();
            let clusters = refine(&cands, &cfg.refine)
                .into_iter()
                .map(|c| {
                    let (cx, cy) = c.window.center();
                    ClusterJson {
                        cx,
                        cy,
                        w: c.window.w,
                        h: c.window.h,
                        member_indices: Vec::new(),
                        seed_index: None,
                        score: Some(c.score),
                    }
                })
                .collect();
            ImageClusters {
                image_id: img.image_id,
                clusters,
            }
        })
        .collect();
    let summary = summarize(&images);
    emit(
        global,
        &ClusterFile {
            config: Some(config_value(cfg)),
            images,
            summary: Some(summary),
        },
    )
}

#[derive(Serialize)]
struct TargetIndexEntry {
    image_id: u64,
    prefix: String,
    shape: [usize; 3],
    objects: usize,
}

#[derive(Serialize)]
struct TargetIndex {
    config: Value,
    images: Vec<TargetIndexEntry>,
}

fn targets(global: &GlobalArgs, cfg: &PipelineConfig, dataset: &Path) -> Result<()> {
    let dir = out_dir(global)?;
    let (records, tree) = load_records(cfg, dataset)?;
    let images = records
        .par_iter()
        .map(|r| {
            let t = splat_targets(r, &tree, &cfg.heatmap)?;
            let prefix = r.stem();
            write_targets(&dir.join(&prefix), &t)?;
            Ok(TargetIndexEntry {
                image_id: r.id,
                prefix,
                shape: [t.rows(), t.cols(), t.channels()],
                objects: t.n_objects(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = TargetIndex {
        config: config_value(cfg),
        images,
    };
    write_file(&dir.join("index.json"), to_json(&index))
}

#[derive(Serialize)]
struct LossCheckReport {
    config: Value,
    #[serde(flatten)]
    loss: LossReport,
    grad_check_max_rel_err: f64,
    grad_check_cells: usize,
    grad_check_step: f64,
}

fn loss_check(global: &GlobalArgs, cfg: &PipelineConfig, target: &Path, pred: Option<&Path>) -> Result<()> {
    let t = read_targets(target)?;
    let prediction = match pred {
        Some(p) => {
            let s = read_targets(p)?;
            Prediction {
                heatmap: s.heatmap,
                sizes: s.sizes,
                offsets: s.offsets,
            }
        }
        // 1 - eps on target peaks and eps elsewhere, with exact sizes and offsets
        None => {
            let eps = cfg.loss.clamp_eps;
            Prediction {
                heatmap: t.heatmap.mapv(|y| if y == 1.0 { 1.0 - eps } else { eps }),
                sizes: t.sizes.clone(),
                offsets: t.offsets.clone(),
            }
        }
    };
    let loss = evaluate(&t, &prediction, &cfg.loss)?;

    // every channel at each object peak plus an even sample of the grid
    let (rows, cols, chans) = prediction.heatmap.dim();
    let mut cells: Vec<[usize; 3]> = t
        .peak_cells
        .iter()
        .flat_map(|&[px, py]| (0..chans).map(move |k| [py, px, k]))
        .filter(|&[r, c, _]| r < rows && c < cols)
        .collect();
    let n = rows * cols * chans;
    let stride = (n / GRAD_CHECK_SAMPLES).max(1);
    cells.extend((0..n).step_by(stride).map(|i| [i / (cols * chans), (i / chans) % cols, i % chans]));
    let max_rel_err = heatmap_grad_check(&t, &prediction, &cfg.loss, &cells, GRAD_CHECK_STEP)?;

    emit(
        global,
        &LossCheckReport {
            config: serde_json::to_value(cfg.loss).expect("configuration serializes"),
            loss,
            grad_check_max_rel_err: max_rel_err,
            grad_check_cells: cells.len(),
            grad_check_step: GRAD_CHECK_STEP,
        },
    )
}

/// Chip results as written by `synth --detect`, or a bare list.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ChipsInput {
    Document {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<Value>,
        images: Vec<ImageChipResults>,
    },
    List(Vec<ImageChipResults>),
}

fn fuse_all(images: &[ImageChipResults], cfg: &PipelineConfig) -> Vec<ImageDetections> {
    images
        .par_iter()
        .map(|img| ImageDetections {
            image_id: img.image_id,
            detections: img.fuse(&cfg.fuse),
        })
        .collect()
}

fn fuse(global: &GlobalArgs, cfg: &PipelineConfig, path: &Path) -> Result<()> {
    let images = match read_json::<ChipsInput>(path)? {
        ChipsInput::Document { images, .. } | ChipsInput::List(images) => images,
    };
    emit(
        global,
        &DetectionsFile {
            config: Some(config_value(cfg)),
            images: fuse_all(&images, cfg),
        },
    )
}

#[derive(Serialize)]
struct EvalReport {
    config: Value,
    summary: EvalSummary,
}

fn eval(global: &GlobalArgs, cfg: &PipelineConfig, gt: &Path, dets: &Path, csv: Option<&Path>) -> Result<()> {
    let (records, tree) = load_records(cfg, gt)?;
    let detections = load_detections(dets)?;
    let summary = ap_summary(&detections, &records, &tree, &cfg.eval)?;
    if let Some(p) = csv {
        write_file(p, per_category_csv(&summary))?;
    }
    emit(
        global,
        &EvalReport {
            config: config_value(cfg),
            summary,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Value>,
    pool: PoolManifest,
    plans: Vec<PastePlan>,
}

fn find_mask(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn mrm_plan(
    global: &GlobalArgs,
    cfg: &PipelineConfig,
    dataset: &Path,
    masks: Option<&Path>,
    pool: Option<&Path>,
) -> Result<()> {
    let (records, tree) = load_records(cfg, dataset)?;
    let pool = match pool {
        Some(p) => PoolManifest::load(p)?,
        None => {
            let (entries, warnings) = build_object_pool(&records, &tree, &cfg.mrm.rarity);
            for w in warnings {
                log::warn!("{w}");
            }
            PoolManifest {
                rule: cfg.mrm.rarity.clone(),
                entries,
            }
        }
    };
    let sizes = SizeReference::from_records(&records, &tree);
    let plans = records
        .par_iter()
        .map(|r| {
            let mut notes = Vec::new();
            let mask = match masks {
                None => MaskRaster::for_dims(r.dims, true),
                Some(dir) => match find_mask(dir, &r.stem()) {
                    Some(p) => MaskRaster::load(&p)?,
                    None => {
                        notes.push(format!("image {}: no mask for {}, nothing may be pasted", r.id, r.stem()));
                        MaskRaster::for_dims(r.dims, false)
                    }
                },
            };
            let mut plan = plan_pastes(r, &mask, &pool.entries, &sizes, &tree, image_seed(cfg.seed, r.id), &cfg.mrm)?;
            notes.append(&mut plan.warnings);
            plan.warnings = notes;
            Ok(plan)
        })
        .collect::<Result<Vec<_>>>()?;
    for w in plans.iter().flat_map(|p| &p.warnings) {
        log::warn!("{w}");
    }
    emit(
        global,
        &PlanFile {
            config: Some(config_value(cfg)),
            pool,
            plans,
        },
    )
}

fn image_path(images: &Path, r: &ImageRecord) -> PathBuf {
    images.join(r.file_name.clone().unwrap_or_else(|| format!("{}.png", r.stem())))
}

fn mrm_composite(global: &GlobalArgs, cfg: &PipelineConfig, dataset: &Path, plans: &Path, images: &Path) -> Result<()> {
    let dir = out_dir(global)?;
    let (records, tree) = load_records(cfg, dataset)?;
    let doc: PlanFile = read_json(plans)?;
    let by_id: HashMap<u64, &ImageRecord> = records.iter().map(|r| (r.id, r)).collect();
    let plans_by_id: HashMap<u64, &PastePlan> = doc.plans.iter().map(|p| (p.image_id, p)).collect();
    let plan_dir = plans.parent().unwrap_or(Path::new("."));

    let mut crops: HashMap<String, CropImage> = HashMap::new();
    let used: Vec<&str> = doc.plans.iter().flat_map(|p| &p.pastes).map(|p| p.crop_id.as_str()).collect();
    for entry in doc.pool.entries.iter().filter(|e| used.contains(&e.crop_id.as_str())) {
        let pixels = match &entry.file {
            Some(f) => load_rgb(&plan_dir.join(f))?,
            None => {
                let src = by_id.get(&entry.source_image_id).ok_or_else(|| {
                    Error::Data(format!("{}: source image {} not in dataset", entry.crop_id, entry.source_image_id))
                })?;
                crop_pixels(&load_rgb(&image_path(images, src))?, &entry.source_box)
            }
        };
        let alpha: Option<GrayImage> = match &entry.alpha_file {
            Some(f) => {
                let p = plan_dir.join(f);
                Some(
                    image::open(&p)
                        .map_err(|source| Error::Image { path: p.clone(), source })?
                        .to_luma8(),
                )
            }
            None => None,
        };
        crops.insert(entry.crop_id.clone(), CropImage { pixels, alpha });
    }

    let out_records = records
        .par_iter()
        .map(|r| {
            let raster = load_rgb(&image_path(images, r))?;
            let name = format!("{}.png", r.stem());
            let mut rec = (*r).clone();
            rec.file_name = Some(name.clone());
            let img = match plans_by_id.get(&r.id) {
                Some(plan) => {
                    let (img, anns, warnings) = composite(&raster, r, plan, &crops)?;
                    for w in warnings {
                        log::warn!("{w}");
                    }
                    rec.annotations = anns;
                    img
                }
                None => raster,
            };
            save_png(&dir.join(&name), &img)?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    save_coco(&out_records, &tree, &dir.join("annotations.json"))
}

fn synth(global: &GlobalArgs, cfg: &PipelineConfig, count: u64, render: bool, detect: bool, use_refine: bool) -> Result<()> {
    let dir = out_dir(global)?;
    let tree = cfg.label_tree()?;
    let records = (1..=count)
        .into_par_iter()
        .map(|id| generate_scene(&cfg.scene, id))
        .collect::<Result<Vec<_>>>()?;
    save_coco(&records, &tree, &dir.join("annotations.json"))?;

    if render {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        records
            .par_iter()
            .try_for_each(|r| save_png(&image_path(&img_dir, r), &render_scene(r)))?;
    }

    if detect {
        let stages = PipelineStages {
            nmm: cfg.nmm,
            refine: use_refine.then_some(cfg.refine),
            fuse: cfg.fuse,
            oracle: cfg.oracle.clone(),
        };
        stages.validate()?;
        let chips: Vec<ImageChipResults> = records.par_iter().map(|r| chip_results(r, &stages)).collect();
        let detections = fuse_all(&chips, cfg);
        write_file(
            &dir.join("chips.json"),
            to_json(&ChipsInput::Document {
                config: Some(config_value(cfg)),
                images: chips,
            }),
        )?;
        DetectionsFile {
            config: Some(config_value(cfg)),
            images: detections,
        }
        .save(&dir.join("detections.json"))?;
    }
    Ok(())
}
