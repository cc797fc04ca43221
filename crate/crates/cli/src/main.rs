use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "autolabel",
    version,
    about = "Vehicle auto-labeling from VIS imagery and DSM rasters"
)]
struct Cli {
    /// INI settings applied on top of the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for the classifier (and, for gen-synthetic, the scene).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// VIS image (binary PPM).
    #[arg(long)]
    vis: PathBuf,

    /// DSM raster (DSMF).
    #[arg(long)]
    dsm: Option<PathBuf>,

    /// Image id used in label files; defaults to the VIS file stem.
    #[arg(long)]
    image_id: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,

    #[arg(long)]
    gt: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Blend the VIS image with the normalized DSM; writes fused.ppm.
    Fuse {
        #[arg(long)]
        vis: PathBuf,
        #[arg(long)]
        dsm: PathBuf,
    },
    /// Superpixels, merging and clustering; writes superpixels.csv.
    Segment(SceneArgs),
    /// Candidate regions and their boxes; writes candidates.txt.
    Candidates(SceneArgs),
    /// Train the baseline patch classifier; writes model.txt.
    ClassifyTrain {
        /// Manual annotations added to the reference samples.
        #[arg(long, requires = "vis")]
        manual: Option<PathBuf>,
        #[arg(long)]
        vis: Option<PathBuf>,
        #[arg(long)]
        image_id: Option<String>,
    },
    /// Score candidates and split them at tau; writes selected.txt and rejected.txt.
    Select {
        #[command(flatten)]
        scene: SceneArgs,
        /// Model written by classify-train.
        #[arg(long, conflicts_with = "scores")]
        model: Option<PathBuf>,
        /// Per-candidate probabilities from an external classifier.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Full pipeline; writes labels.txt, metrics.csv and pr.csv.
    Run {
        /// finetune-only, seg-attention-only, vis-aft or ms-aft.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        vis: Option<PathBuf>,
        #[arg(long)]
        dsm: Option<PathBuf>,
        #[arg(long)]
        image_id: Option<String>,
        /// Detections of the external detector.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Precision, recall and F1 of a detection file; writes metrics.csv.
    Evaluate(EvalArgs),
    /// Precision-recall curve of a detection file; writes pr.csv.
    PrCurve(EvalArgs),
    /// Rerun the pipeline on degraded copies of the inputs; writes resolution.csv.
    ResolutionStudy {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        factors: Vec<f64>,
    },
    /// Render a synthetic scene; writes scene.ppm, scene.dsmf, gt.txt and detections.txt.
    GenSynthetic {
        #[arg(long, default_value_t = 30)]
        vehicles: usize,
        #[arg(long, default_value_t = 5)]
        buildings: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 1024)]
        height: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 3 } else { 2 })
        }
    }
}
