mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clusterdet", version, about = "Cluster-chip detection toolkit for aerial imagery")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct GlobalArgs {
    /// Run configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run seed; also seeds scene generation and the oracle detector.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or output directory for commands that write several files.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Cluster ground truth for a dataset (COCO JSON or visDrone directory).
    Nmm {
        dataset: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        chip_width: Option<f64>,
        #[arg(long)]
        chip_height: Option<f64>,
        #[arg(long)]
        small_max_side: Option<f64>,
    },
    /// Top-k selection and overlap suppression of cluster candidates.
    Refine {
        clusters: PathBuf,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        pr_overlap: Option<f64>,
    },
    /// Writes dense heatmap targets for every image.
    Targets {
        dataset: PathBuf,
        #[arg(long)]
        down_ratio: Option<usize>,
    },
    /// Loss terms of a prediction dump against a target dump, plus a gradient check.
    LossCheck {
        /// Target dump prefix (`<prefix>.bin` and `<prefix>.json`).
        target: PathBuf,
        /// Prediction dump prefix; the target itself when omitted.
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Fuses per-chip detections into per-image detections.
    Fuse {
        chips: PathBuf,
        #[arg(long)]
        max_detections: Option<usize>,
        #[arg(long)]
        nms_iou: Option<f64>,
    },
    /// AP, AP50 and AP75 of detections against ground truth.
    Eval {
        ground_truth: PathBuf,
        detections: PathBuf,
        /// Also write the per-category table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Plans rare-object pastes per image.
    MrmPlan {
        dataset: PathBuf,
        /// Directory of `<stem>.png` or `<stem>.pgm` masks; nonzero pixels allow pasting.
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Existing pool manifest; built from the dataset when omitted.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Applies paste plans to the source images.
    MrmComposite {
        dataset: PathBuf,
        #[arg(long)]
        plans: PathBuf,
        /// Directory holding the dataset images.
        #[arg(long)]
        images: PathBuf,
    },
    /// Generates synthetic scenes, optionally rendered and run through the oracle detector.
    Synth {
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Write a PNG per scene.
        #[arg(long)]
        render: bool,
        /// Write oracle chip results and fused detections.
        #[arg(long)]
        detect: bool,
        /// Chip only the refined top clusters when detecting.
        #[arg(long)]
        refine: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
