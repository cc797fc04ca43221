use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use autolabel_core::classify::{
    load_external_scores, load_manual_labels, select_high_quality, Classifier, LinearModel,
};
use autolabel_core::eval::{
    average_precision, evaluate, load_detections, load_ground_truth, pr_curve, prf1, save_detections,
    save_ground_truth, write_metrics_csv, write_pr_csv, DetectionSet, MetricsRow,
};
use autolabel_core::fusion::{fuse, normalize_dsm};
use autolabel_core::pipeline::{
    find_candidates, fused_image, generate_synthetic, initial_training_set, resolution_study, run_pipeline, segment,
    train_classifier, write_outputs, PipelineConfig, PipelineInputs,
};
use autolabel_core::raster::{load_dsm, load_vis, save_dsm, save_vis, validate_alignment, HeightRaster, RgbRaster};
use autolabel_core::{Error, Result};

use crate::{Cli, Command, EvalArgs, SceneArgs};

/// Seed of generated scenes when `--seed` is absent.
const DEFAULT_SCENE_SEED: u64 = 42;

struct Context {
    cfg: PipelineConfig,
    seed: Option<u64>,
    out: PathBuf,
}

impl Context {
    fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|source| Error::Io {
            path: self.out.clone(),
            source,
        })?;
        Ok(self.out.join(name))
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.classify.seed = s;
    }
    Ok(cfg)
}

fn image_id(vis: &Path, given: Option<&str>) -> String {
    match given {
        Some(id) => id.to_string(),
        None => vis
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".to_string()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_scene(args: &SceneArgs) -> Result<(RgbRaster, Option<HeightRaster>, String)> {
    let vis = load_vis(&args.vis)?;
    let dsm = args.dsm.as_deref().map(load_dsm).transpose()?;
    Ok((vis, dsm, image_id(&args.vis, args.image_id.as_deref())))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Context {
        cfg: load_config(cli.config.as_deref(), cli.seed)?,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Fuse { vis, dsm } => fuse_cmd(&ctx, &vis, &dsm),
        Command::Segment(scene) => segment_cmd(&ctx, &scene),
        Command::Candidates(scene) => candidates_cmd(&ctx, &scene),
        Command::ClassifyTrain { manual, vis, image_id } => {
            classify_train_cmd(&ctx, manual.as_deref(), vis.as_deref(), image_id.as_deref())
        }
        Command::Select { scene, model, scores } => select_cmd(&ctx, &scene, model.as_deref(), scores.as_deref()),
        Command::Run {
            mode,
            vis,
            dsm,
            image_id,
            detections,
            gt,
            manual,
            scores,
        } => {
            let mut cfg = ctx.cfg.clone();
            if let Some(m) = mode {
                cfg.mode = m.parse()?;
            }
            let inputs = RunFiles {
                vis,
                dsm,
                image_id,
                detections,
                gt,
                manual,
                scores,
            }
            .load()?;
            run_cmd(&ctx, &cfg, &inputs)
        }
        Command::Evaluate(args) => evaluate_cmd(&ctx, &args),
        Command::PrCurve(args) => pr_curve_cmd(&ctx, &args),
        Command::ResolutionStudy {
            scene,
            gt,
            detections,
            factors,
        } => {
            let inputs = RunFiles {
                vis: Some(scene.vis),
                dsm: scene.dsm,
                image_id: scene.image_id,
                detections,
                gt: Some(gt),
                manual: None,
                scores: None,
            }
            .load()?;
            let rows = resolution_study(&ctx.cfg, &inputs, &factors)?;
            for r in &rows {
                println!(
                    "factor {}: precision {} recall {} f1 {}",
                    r.factor, r.precision, r.recall, r.f1
                );
            }
            write_metrics_csv(ctx.output("resolution.csv")?, &rows)
        }
        Command::GenSynthetic {
            vehicles,
            buildings,
            width,
            height,
        } => gen_synthetic_cmd(&ctx, vehicles, buildings, (width, height)),
    }
}

fn fuse_cmd(ctx: &Context, vis: &Path, dsm: &Path) -> Result<()> {
    let vis = load_vis(vis)?;
    let dsm = load_dsm(dsm)?;
    let report = validate_alignment(&vis, &dsm);
    if !report.aligned {
        return Err(Error::DimensionMismatch(report.message));
    }
    let fused = fuse(&vis, &normalize_dsm(&dsm)?, &ctx.cfg.fusion)?;
    save_vis(ctx.output("fused.ppm")?, &fused)
}

fn segment_cmd(ctx: &Context, args: &SceneArgs) -> Result<()> {
    let (vis, dsm, _) = load_scene(args)?;
    if let Some(d) = &dsm {
        let report = validate_alignment(&vis, d);
        if !report.aligned {
            return Err(Error::DimensionMismatch(report.message));
        }
    }
    let fused = fused_image(&vis, dsm.as_ref(), &ctx.cfg.fusion)?;
    let (sp, merged, clusters) = segment(&fused, dsm.as_ref(), &ctx.cfg)?;
    let mut csv = String::from("id,x,y,l,a,b,height,size,cluster\n");
    for (s, c) in merged.superpixels().iter().zip(&clusters.cluster_of) {
        let height = s.mean_height.map(|h| h.to_string()).unwrap_or_default();
        let cluster = c.map_or_else(|| "noise".to_string(), |c| c.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            s.id, s.centroid.0, s.centroid.1, s.mean_lab.l, s.mean_lab.a, s.mean_lab.b, height, s.size, cluster
        );
    }
    println!(
        "{} superpixels, {} after merging, {} clusters",
        sp.len(),
        merged.len(),
        clusters.n_clusters
    );
    write_file(&ctx.output("superpixels.csv")?, &csv)
}

fn candidates_cmd(ctx: &Context, args: &SceneArgs) -> Result<()> {
    let (vis, dsm, id) = load_scene(args)?;
    let found = find_candidates(&vis, dsm.as_ref(), &id, &ctx.cfg)?;
    let mut text = String::new();
    for c in &found.candidates {
        let b = &c.hbb;
        let _ = writeln!(text, "{} {} {} {} {}", c.id, b.x_c, b.y_c, b.w, b.h);
    }
    println!(
        "{} clusters, {} regions, {} candidates",
        found.counts.clusters, found.counts.regions, found.counts.candidates
    );
    write_file(&ctx.output("candidates.txt")?, &text)
}

fn classify_train_cmd(ctx: &Context, manual: Option<&Path>, vis: Option<&Path>, id: Option<&str>) -> Result<()> {
    let mut inputs = PipelineInputs::default();
    if let Some(v) = vis {
        inputs.vis = Some(load_vis(v)?);
        inputs.image_id = image_id(v, id);
    }
    if let Some(m) = manual {
        inputs.manual_labels = load_manual_labels(m)?;
    }
    let samples = initial_training_set(&inputs, &ctx.cfg, false)?;
    let report = train_classifier(&samples, &ctx.cfg.classify, ctx.cfg.classify.seed)?;
    println!(
        "{} samples, loss {} -> {}",
        samples.len(),
        report.losses.first().copied().unwrap_or(0.0),
        report.losses.last().copied().unwrap_or(0.0)
    );
    report.model.save(ctx.output("model.txt")?)
}

fn select_cmd(ctx: &Context, args: &SceneArgs, model: Option<&Path>, scores: Option<&Path>) -> Result<()> {
    let (vis, dsm, id) = load_scene(args)?;
    let clf: Box<dyn Classifier> = match (model, scores) {
        (_, Some(s)) => Box::new(load_external_scores(s)?),
        (Some(m), None) => Box::new(LinearModel::load(m)?),
        (None, None) => {
            let samples = initial_training_set(&PipelineInputs::default(), &ctx.cfg, false)?;
            Box::new(train_classifier(&samples, &ctx.cfg.classify, ctx.cfg.classify.seed)?.model)
        }
    };
    let found = find_candidates(&vis, dsm.as_ref(), &id, &ctx.cfg)?;
    let result = select_high_quality(&found.candidates, clf.as_ref(), ctx.cfg.classify.tau)?;
    let as_set = |items: &[autolabel_core::classify::ScoredCandidate]| {
        let mut set = DetectionSet::new();
        set.images.entry(id.clone()).or_default();
        for s in items {
            set.push(id.clone(), s.scored_box());
        }
        set
    };
    println!(
        "{} of {} candidates selected at tau {}",
        result.selected.len(),
        found.candidates.len(),
        result.tau
    );
    save_detections(ctx.output("selected.txt")?, &as_set(&result.selected))?;
    save_detections(ctx.output("rejected.txt")?, &as_set(&result.rejected))
}

struct RunFiles {
    vis: Option<PathBuf>,
    dsm: Option<PathBuf>,
    image_id: Option<String>,
    detections: Option<PathBuf>,
    gt: Option<PathBuf>,
    manual: Option<PathBuf>,
    scores: Option<PathBuf>,
}

impl RunFiles {
    fn load(self) -> Result<PipelineInputs> {
        let image_id = match (&self.vis, &self.image_id) {
            (Some(v), given) => image_id(v, given.as_deref()),
            (None, Some(given)) => given.clone(),
            (None, None) => String::new(),
        };
        Ok(PipelineInputs {
            image_id,
            vis: self.vis.as_deref().map(load_vis).transpose()?,
            dsm: self.dsm.as_deref().map(load_dsm).transpose()?,
            detections: self.detections.as_deref().map(load_detections).transpose()?,
            ground_truth: self.gt.as_deref().map(load_ground_truth).transpose()?,
            manual_labels: self
                .manual
                .as_deref()
                .map(load_manual_labels)
                .transpose()?
                .unwrap_or_default(),
            external_scores: self.scores.as_deref().map(load_external_scores).transpose()?,
        })
    }
}

fn run_cmd(ctx: &Context, cfg: &PipelineConfig, inputs: &PipelineInputs) -> Result<()> {
    let out = run_pipeline(cfg, inputs)?;
    let c = &out.counts;
    println!(
        "mode {}: {} clusters, {} regions, {} candidates, {} selected, {} labels",
        cfg.mode,
        c.clusters,
        c.regions,
        c.candidates,
        c.selected,
        out.labels.len()
    );
    if let Some(m) = &out.metrics {
        let (p, r, f1) = prf1(m);
        println!("precision {p} recall {r} f1 {f1} ap {}", out.average_precision());
    }
    write_outputs(&ctx.out, &out)
}

fn evaluate_cmd(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let dets = load_detections(&args.detections)?;
    let gts = load_ground_truth(&args.gt)?;
    let m = evaluate(&dets, &gts, ctx.cfg.eval.iou, ctx.cfg.eval.score_threshold);
    let ap = average_precision(&pr_curve(&dets, &gts, ctx.cfg.eval.iou));
    let row = MetricsRow::from_match(1.0, &m);
    println!(
        "tp {} fp {} fn {}: precision {} recall {} f1 {} ap {ap}",
        m.tp, m.fp, m.fn_, row.precision, row.recall, row.f1
    );
    write_metrics_csv(ctx.output("metrics.csv")?, &[row])
}

fn pr_curve_cmd(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let dets = load_detections(&args.detections)?;
    let gts = load_ground_truth(&args.gt)?;
    let curve = pr_curve(&dets, &gts, ctx.cfg.eval.iou);
    println!("{} points, ap {}", curve.len(), average_precision(&curve));
    write_pr_csv(ctx.output("pr.csv")?, &curve)
}

fn gen_synthetic_cmd(ctx: &Context, vehicles: usize, buildings: usize, dims: (usize, usize)) -> Result<()> {
    let seed = ctx.seed.unwrap_or(DEFAULT_SCENE_SEED);
    let scene = generate_synthetic(seed, vehicles, buildings, dims)?;
    let dets = ctx.cfg.stub.detect(&scene.gts, dims, seed);
    save_vis(ctx.output(&format!("{}.ppm", scene.image_id))?, &scene.vis)?;
    save_dsm(ctx.output(&format!("{}.dsmf", scene.image_id))?, &scene.dsm)?;
    save_ground_truth(ctx.output("gt.txt")?, &scene.gts)?;
    save_detections(ctx.output("detections.txt")?, &dets)?;
    println!(
        "{}x{} scene {:?}: {} vehicles, {} buildings, {} stub detections",
        dims.0,
        dims.1,
        scene.image_id,
        scene.gts.len(),
        scene.buildings.len(),
        dets.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use autolabel_core::pipeline::Mode;

    #[test]
    fn image_id_from_stem() {
        assert_eq!(image_id(Path::new("/data/tile_07.ppm"), None), "tile_07");
        assert_eq!(image_id(Path::new("/data/tile_07.ppm"), Some("x")), "x");
    }

    #[test]
    fn unreadable_config_is_a_config_error() {
        let e = load_config(Some(Path::new("/nonexistent/autolabel.ini")), None).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn seed_overrides_classifier_seed() {
        assert_eq!(load_config(None, Some(11)).unwrap().classify.seed, 11);
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("vis-aft".parse::<Mode>().unwrap(), Mode::VisAft);
    }
}
