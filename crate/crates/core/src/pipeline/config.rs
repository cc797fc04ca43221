use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::regions::SelectionParams;
use crate::segmentation::{DbscanParams, SlicParams};

use super::synthetic::{StubDetector, SCENE_GSD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Branch I alone: external detections evaluated as they are.
    FinetuneOnly,
    /// Branches II and III on fused VIS and DSM.
    SegAttentionOnly,
    /// All branches, VIS imagery only.
    VisAft,
    /// All branches on fused VIS and DSM.
    MsAft,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::FinetuneOnly, Mode::SegAttentionOnly, Mode::VisAft, Mode::MsAft];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FinetuneOnly => "finetune-only",
            Mode::SegAttentionOnly => "seg-attention-only",
            Mode::VisAft => "vis-aft",
            Mode::MsAft => "ms-aft",
        }
    }

    pub fn uses_detections(self) -> bool {
        matches!(self, Mode::FinetuneOnly | Mode::VisAft | Mode::MsAft)
    }

    pub fn uses_segmentation(self) -> bool {
        self != Mode::FinetuneOnly
    }

    pub fn uses_dsm(self) -> bool {
        matches!(self, Mode::SegAttentionOnly | Mode::MsAft)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            lr: 1.0,
            epochs: 2000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// IoU needed for a detection to match a ground-truth box.
    pub iou: f64,
    /// Detections scoring below this are left out of the reported metrics.
    pub score_threshold: f64,
    pub window: usize,
    pub stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou: 0.5,
            score_threshold: 0.6,
            window: 608,
            stride: 304,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub rounds: usize,
    /// Meters per pixel of the input rasters.
    pub gsd: f64,
    pub fusion: FusionConfig,
    pub slic: SlicParams,
    pub lambda_h: f64,
    pub dbscan: DbscanParams,
    pub select: SelectionParams,
    pub classify: ClassifyConfig,
    pub eval: EvalConfig,
    pub stub: StubDetector,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_gsd(SCENE_GSD)
    }
}

impl PipelineConfig {
    pub fn for_gsd(gsd: f64) -> Self {
        // Similarity merging runs first and usually leaves a whole vehicle as
        // one superpixel, so a lone superpixel must be able to seed a cluster.
        let dbscan = DbscanParams {
            min_pts: 1,
            ..DbscanParams::default()
        };
        Self {
            mode: Mode::MsAft,
            rounds: 1,
            gsd,
            fusion: FusionConfig::default(),
            slic: SlicParams::default(),
            lambda_h: dbscan.lambda_h,
            dbscan,
            select: SelectionParams::for_gsd(gsd),
            classify: ClassifyConfig::default(),
            eval: EvalConfig::default(),
            stub: StubDetector::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("pipeline.rounds must be >= 1".into()));
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(Error::Config("pipeline.gsd must be positive".into()));
        }
        FusionConfig::new(self.fusion.weight_vis)?;
        self.slic.validate()?;
        self.dbscan.validate()?;
        self.select.validate()?;
        let c = &self.classify;
        if !(0.0..=1.0).contains(&c.tau) {
            return Err(Error::Config(format!("classify.tau must lie in [0, 1], got {}", c.tau)));
        }
        if !(c.lr >= 0.0 && c.lr.is_finite()) {
            return Err(Error::Config("classify.lr must be >= 0".into()));
        }
        let e = &self.eval;
        if !(0.0..=1.0).contains(&e.iou) || !(0.0..=1.0).contains(&e.score_threshold) {
            return Err(Error::Config(
                "eval.iou and eval.score_threshold must lie in [0, 1]".into(),
            ));
        }
        if e.window == 0 || e.stride == 0 {
            return Err(Error::Config("eval.window and eval.stride must be >= 1".into()));
        }
        let s = &self.stub;
        if !(0.0..=1.0).contains(&s.recall)
            || !(s.noise >= 0.0)
            || !(0.0 <= s.min_score && s.min_score <= s.max_score && s.max_score <= 1.0)
        {
            return Err(Error::Config(
                "stub: need recall in [0, 1], noise >= 0, 0 <= min_score <= max_score <= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses `section.key = value` settings on top of the defaults. Area
    /// bounds not given explicitly follow `pipeline.gsd`.
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (section, props) in &ini {
            for (k, v) in props.iter() {
                let key = match section {
                    Some(s) => format!("{s}.{k}"),
                    None => return Err(Error::Config(format!("key {k:?} outside any section"))),
                };
                kv.insert(key, v.trim().to_string());
            }
        }
        let mut take = |key: &str| kv.remove(key);
        fn parse<T: FromStr>(key: &str, v: Option<String>, into: &mut T) -> Result<()> {
            if let Some(v) = v {
                *into = v
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))?;
            }
            Ok(())
        }

        let mut gsd = SCENE_GSD;
        parse("pipeline.gsd", take("pipeline.gsd"), &mut gsd)?;
        let mut cfg = Self::for_gsd(gsd);
        if let Some(m) = take("pipeline.mode") {
            cfg.mode = m.parse()?;
        }
        macro_rules! keys {
            ($($key:literal => $field:expr),* $(,)?) => {
                $( parse($key, take($key), &mut $field)?; )*
            };
        }
        keys! {
            "pipeline.rounds" => cfg.rounds,
            "fusion.weight_vis" => cfg.fusion.weight_vis,
            "slic.k" => cfg.slic.k,
            "slic.compactness" => cfg.slic.compactness,
            "slic.iterations" => cfg.slic.iterations,
            "seg.merge_threshold" => cfg.slic.merge_threshold,
            "seg.lambda_h" => cfg.lambda_h,
            "dbscan.epsilon" => cfg.dbscan.epsilon,
            "dbscan.min_pts" => cfg.dbscan.min_pts,
            "select.height_low" => cfg.select.height_low,
            "select.height_high" => cfg.select.height_high,
            "select.area_th" => cfg.select.area_th,
            "select.area_floor" => cfg.select.area_floor,
            "select.kernel" => cfg.select.kernel,
            "classify.tau" => cfg.classify.tau,
            "classify.lr" => cfg.classify.lr,
            "classify.epochs" => cfg.classify.epochs,
            "classify.seed" => cfg.classify.seed,
            "eval.iou" => cfg.eval.iou,
            "eval.score_threshold" => cfg.eval.score_threshold,
            "eval.window" => cfg.eval.window,
            "eval.stride" => cfg.eval.stride,
            "stub.recall" => cfg.stub.recall,
            "stub.noise" => cfg.stub.noise,
            "stub.min_score" => cfg.stub.min_score,
            "stub.max_score" => cfg.stub.max_score,
        }
        cfg.dbscan.lambda_h = cfg.lambda_h;
        cfg.stub.window = cfg.eval.window;
        cfg.stub.stride = cfg.eval.stride;
        if let Some(unknown) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {unknown:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
