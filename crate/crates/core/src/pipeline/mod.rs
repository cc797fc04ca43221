//! End-to-end orchestration of the three branches: external detections
//! (branch I), DSM-guided segmentation (branch II) and active classification
//! (branch III).

mod config;
mod reference;
mod synthetic;

pub use config::{ClassifyConfig, EvalConfig, Mode, PipelineConfig};
pub use reference::reference_samples;
pub use synthetic::{generate_synthetic, StubDetector, SyntheticScene, SCENE_GSD, VEHICLE_HEIGHT};

use std::path::Path;

use crate::classify::{
    augment, extract_patch, select_high_quality, train_baseline, update_training_set, Candidate, Classifier,
    ExternalScores, Label, LabeledSample, Origin, SelectionResult, TrainingReport,
};
use crate::error::{Error, Result};
use crate::eval::{
    average_precision, evaluate, merge_branches, pr_curve, save_detections, write_metrics_csv, write_pr_csv,
    DetectionSet, GroundTruthSet, MatchResult, MetricsRow, PrPoint,
};
use crate::fusion::{fuse, normalize_dsm, FusionConfig};
use crate::hbb::Hbb;
use crate::raster::{validate_alignment, HeightRaster, Resample, ResampleMode, RgbRaster, DEFAULT_NODATA};
use crate::regions::{
    area_filter, close_region, ground_estimate, height_filter, region_to_hbb, split_region, HarrisParams, Mask, Region,
};
use crate::segmentation::{dbscan, merge_similar, slic, ClusterAssignment, SuperpixelMap};

/// Everything a run reads.
#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub image_id: String,
    pub vis: Option<RgbRaster>,
    pub dsm: Option<HeightRaster>,
    pub detections: Option<DetectionSet>,
    pub ground_truth: Option<GroundTruthSet>,
    /// `(image id, label, box)` annotations added to the training set.
    pub manual_labels: Vec<(String, Label, Hbb)>,
    /// Replaces the baseline classifier when present.
    pub external_scores: Option<ExternalScores>,
}

impl PipelineInputs {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Self {
            image_id: scene.image_id.clone(),
            vis: Some(scene.vis.clone()),
            dsm: Some(scene.dsm.clone()),
            ground_truth: Some(scene.gts.clone()),
            ..Default::default()
        }
    }
}

/// Counts of what each stage produced, for reporting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageCounts {
    pub superpixels: usize,
    pub merged: usize,
    pub clusters: usize,
    pub height_regions: usize,
    pub regions: usize,
    pub candidates: usize,
    pub selected: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final merged labels.
    pub labels: DetectionSet,
    pub selection: SelectionResult,
    pub training_set: Vec<LabeledSample>,
    pub regions: Vec<Region>,
    pub counts: StageCounts,
    /// Present when ground truth was supplied.
    pub metrics: Option<MatchResult>,
    pub pr: Vec<PrPoint>,
}

impl PipelineOutput {
    pub fn metrics_row(&self, factor: f64) -> Option<MetricsRow> {
        self.metrics.as_ref().map(|m| MetricsRow::from_match(factor, m))
    }

    pub fn average_precision(&self) -> f64 {
        average_precision(&self.pr)
    }
}

/// Fused image used for segmentation. Without a DSM, or with a VIS weight of
/// 1, this is the VIS image itself.
pub fn fused_image(vis: &RgbRaster, dsm: Option<&HeightRaster>, fusion: &FusionConfig) -> Result<RgbRaster> {
    match dsm {
        Some(d) if fusion.weight_vis < 1.0 => fuse(vis, &normalize_dsm(d)?, fusion),
        _ => Ok(vis.clone()),
    }
}

/// SLIC over the fused image, similarity merging and DBSCAN over superpixel
/// centroids (meters) and mean heights.
pub fn segment(
    fused: &RgbRaster,
    dsm: Option<&HeightRaster>,
    cfg: &PipelineConfig,
) -> Result<(SuperpixelMap, SuperpixelMap, ClusterAssignment)> {
    let (w, h) = fused.dims();
    let blank;
    let heights = match dsm {
        Some(d) => d,
        None => {
            blank = HeightRaster::filled(w, h, DEFAULT_NODATA)?;
            &blank
        }
    };
    let sp = slic(fused, heights, &cfg.slic)?;
    let lambda_h = if dsm.is_some() { cfg.lambda_h } else { 0.0 };
    let merged = merge_similar(&sp, cfg.slic.merge_threshold, lambda_h);
    let items: Vec<[f64; 3]> = merged
        .superpixels()
        .iter()
        .map(|s| {
            [
                s.centroid.0 * cfg.gsd,
                s.centroid.1 * cfg.gsd,
                s.mean_height.unwrap_or(0.0),
            ]
        })
        .collect();
    let params = crate::segmentation::DbscanParams { lambda_h, ..cfg.dbscan };
    let clusters = dbscan(&items, &params)?;
    Ok((sp, merged, clusters))
}

/// One region per cluster, ignoring height.
fn cluster_regions(clusters: &ClusterAssignment, sp: &SuperpixelMap) -> Vec<Region> {
    let members = sp.members();
    let w = sp.width();
    clusters
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(cid, items)| {
            let mask: Mask = items
                .iter()
                .flat_map(|&i| members[i].iter().map(move |&p| (p % w, p / w)))
                .collect();
            Region::new(mask, 0.0, cid as u32)
        })
        .collect()
}

/// Height selection (when a DSM is given), closing, 4-connected splitting and
/// area selection. Returns the regions that passed the height test and the
/// final regions.
pub fn candidate_regions(
    sp: &SuperpixelMap,
    clusters: &ClusterAssignment,
    dsm: Option<&HeightRaster>,
    cfg: &PipelineConfig,
) -> (Vec<Region>, Vec<Region>) {
    let by_height = match dsm.and_then(ground_estimate) {
        Some(ground) => height_filter(clusters, sp, ground, (cfg.select.height_low, cfg.select.height_high)),
        None => cluster_regions(clusters, sp),
    };
    let pieces: Vec<Region> = by_height
        .iter()
        .flat_map(|r| {
            let closed = Region::new(close_region(&r.mask, cfg.select.kernel), r.avg_height, r.source_cluster);
            split_region(&closed)
        })
        .collect();
    let kept = area_filter(pieces, cfg.select.area_th, cfg.select.area_floor);
    (by_height, kept)
}

/// Boxes and 60x60 patches for the regions, ids `<image>:<index>`.
pub fn region_candidates(regions: &[Region], vis: &RgbRaster, image_id: &str) -> Result<Vec<Candidate>> {
    let harris = HarrisParams::default();
    let mut out = Vec::with_capacity(regions.len());
    for r in regions {
        let Some(hbb) = region_to_hbb(r, vis, &harris) else {
            continue;
        };
        let patch = extract_patch(vis, &hbb, image_id)?;
        out.push(Candidate {
            id: format!("{image_id}:{}", out.len()),
            hbb,
            patch,
        });
    }
    Ok(out)
}

fn augmented(samples: &[LabeledSample]) -> Vec<LabeledSample> {
    samples
        .iter()
        .flat_map(|s| {
            augment(&s.patch)
                .into_iter()
                .map(move |p| LabeledSample { patch: p, ..s.clone() })
        })
        .collect()
}

/// Trains the baseline on the four rotations of every training sample.
pub fn train_classifier(training_set: &[LabeledSample], cfg: &ClassifyConfig, seed: u64) -> Result<TrainingReport> {
    train_baseline(&augmented(training_set), cfg.lr, cfg.epochs, seed)
}

/// Candidates of one scene and the regions behind them.
#[derive(Debug, Clone)]
pub struct SceneCandidates {
    pub counts: StageCounts,
    pub regions: Vec<Region>,
    pub candidates: Vec<Candidate>,
}

/// Fusion, segmentation, region selection and box fitting. A DSM, when
/// given, must be aligned with the VIS image.
pub fn find_candidates(
    vis: &RgbRaster,
    dsm: Option<&HeightRaster>,
    image_id: &str,
    cfg: &PipelineConfig,
) -> Result<SceneCandidates> {
    if let Some(d) = dsm {
        let report = validate_alignment(vis, d);
        if !report.aligned {
            return Err(Error::DimensionMismatch(report.message));
        }
    }
    let fused = fused_image(vis, dsm, &cfg.fusion)?;
    let (sp, merged, clusters) = segment(&fused, dsm, cfg)?;
    let (by_height, kept) = candidate_regions(&merged, &clusters, dsm, cfg);
    let candidates = region_candidates(&kept, vis, image_id)?;
    let counts = StageCounts {
        superpixels: sp.len(),
        merged: merged.len(),
        clusters: clusters.n_clusters,
        height_regions: by_height.len(),
        regions: kept.len(),
        candidates: candidates.len(),
        selected: 0,
    };
    Ok(SceneCandidates {
        counts,
        regions: kept,
        candidates,
    })
}

/// Reference samples plus patches of confident external detections and of
/// manual annotations for this image.
pub fn initial_training_set(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
    use_detections: bool,
) -> Result<Vec<LabeledSample>> {
    let mut set = reference_samples(cfg.classify.seed)?;
    let Some(vis) = inputs.vis.as_ref() else {
        return Ok(set);
    };
    if use_detections {
        if let Some(dets) = &inputs.detections {
            for b in dets.boxes(&inputs.image_id) {
                if b.score_or_zero() < cfg.eval.score_threshold {
                    continue;
                }
                if let Ok(patch) = extract_patch(vis, b, &inputs.image_id) {
                    set.push(LabeledSample {
                        patch,
                        label: Label::Vehicle,
                        origin: Origin::Detected,
                        score: b.score,
                    });
                }
            }
        }
    }
    for (image, label, b) in &inputs.manual_labels {
        if image == &inputs.image_id {
            set.push(LabeledSample {
                patch: extract_patch(vis, b, image)?,
                label: *label,
                origin: Origin::Manual,
                score: None,
            });
        }
    }
    Ok(set)
}

/// Runs the configured mode on one scene.
pub fn run_pipeline(cfg: &PipelineConfig, inputs: &PipelineInputs) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mode = cfg.mode;
    if mode.uses_detections() && mode == Mode::FinetuneOnly && inputs.detections.is_none() {
        return Err(Error::invalid("finetune-only mode needs a detections file"));
    }
    let branch_one = if mode.uses_detections() {
        inputs.detections.clone().unwrap_or_default()
    } else {
        DetectionSet::new()
    };

    let mut counts = StageCounts::default();
    let mut selection = SelectionResult::empty(cfg.classify.tau);
    let mut training_set = Vec::new();
    let mut regions = Vec::new();
    if mode.uses_segmentation() {
        let vis = inputs
            .vis
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{mode} mode needs a VIS image")))?;
        let dsm = if mode.uses_dsm() {
            Some(
                inputs
                    .dsm
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("{mode} mode needs a DSM")))?,
            )
        } else {
            None
        };
        let found = find_candidates(vis, dsm, &inputs.image_id, cfg)?;
        counts = found.counts;

        training_set = initial_training_set(inputs, cfg, mode.uses_detections())?;
        for round in 0..cfg.rounds {
            let round_seed = cfg.classify.seed.wrapping_add(round as u64);
            selection = match &inputs.external_scores {
                Some(ext) => select_high_quality(&found.candidates, ext, cfg.classify.tau)?,
                None => {
                    let model = train_classifier(&training_set, &cfg.classify, round_seed)?.model;
                    select_high_quality(&found.candidates, &model as &dyn Classifier, cfg.classify.tau)?
                }
            };
            training_set = update_training_set(training_set, &selection);
        }
        counts.selected = selection.selected.len();
        regions = found.regions;
    }

    let labels = merge_branches(&branch_one, &selection);
    let (metrics, pr) = match &inputs.ground_truth {
        Some(gts) => (
            Some(evaluate(&labels, gts, cfg.eval.iou, cfg.eval.score_threshold)),
            pr_curve(&labels, gts, cfg.eval.iou),
        ),
        None => (None, Vec::new()),
    };
    Ok(PipelineOutput {
        labels,
        selection,
        training_set,
        regions,
        counts,
        metrics,
        pr,
    })
}

/// Writes `labels.txt`, `metrics.csv` and `pr.csv` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, out: &PipelineOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_detections(dir.join("labels.txt"), &out.labels)?;
    let rows: Vec<MetricsRow> = out.metrics_row(1.0).into_iter().collect();
    write_metrics_csv(dir.join("metrics.csv"), &rows)?;
    write_pr_csv(dir.join("pr.csv"), &out.pr)
}

/// Degrades VIS and DSM by each factor (down, then back up), reruns the
/// pipeline and evaluates against the unchanged ground truth.
pub fn resolution_study(cfg: &PipelineConfig, inputs: &PipelineInputs, factors: &[f64]) -> Result<Vec<MetricsRow>> {
    if inputs.ground_truth.is_none() {
        return Err(Error::invalid("the resolution study needs ground truth"));
    }
    factors
        .iter()
        .map(|&f| {
            let mut degraded = inputs.clone();
            degraded.vis = inputs
                .vis
                .as_ref()
                .map(|v| v.resample(f, ResampleMode::DownThenUp))
                .transpose()?;
            degraded.dsm = inputs
                .dsm
                .as_ref()
                .map(|d| d.resample(f, ResampleMode::DownThenUp))
                .transpose()?;
            let out = run_pipeline(cfg, &degraded)?;
            Ok(out.metrics_row(f).expect("ground truth present"))
        })
        .collect()
}
