//! Candidate patches, augmentation, features, the baseline classifier and the
//! high-confidence selection loop.

mod model;
mod select;

pub use model::{
    cross_entropy, loss_and_gradient, train_baseline, train_on_features, Classifier, ExternalScores, LinearModel,
    TrainingReport, PROB_CLAMP,
};
pub use select::{
    load_external_scores, load_manual_labels, save_external_scores, select_high_quality, update_training_set,
    ScoredCandidate, SelectionResult,
};

use crate::color::rgb_to_hsv;
use crate::error::{Error, Result};
use crate::hbb::Hbb;
use crate::raster::{luma, Rgb, RgbRaster};

pub const PATCH_SIZE: usize = 60;
pub const FEATURE_DIM: usize = 40;

const COLOR_BINS: usize = 8;
const ORIENTATION_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pixels: Vec<Rgb>,
    pub source_box: Hbb,
    pub source_image: String,
}

impl Patch {
    pub fn new(pixels: Vec<Rgb>, source_box: Hbb, source_image: impl Into<String>) -> Result<Self> {
        if pixels.len() != PATCH_SIZE * PATCH_SIZE {
            return Err(Error::DimensionMismatch(format!(
                "patch needs {} pixels, got {}",
                PATCH_SIZE * PATCH_SIZE,
                pixels.len()
            )));
        }
        Ok(Self {
            pixels,
            source_box,
            source_image: source_image.into(),
        })
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * PATCH_SIZE + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    NonVehicle = 0,
    Vehicle = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }
}

/// Which part of the training set a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    ReferenceSet,
    Detected,
    Manual,
    Selected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub patch: Patch,
    pub label: Label,
    pub origin: Origin,
    /// Classifier score for selected samples.
    pub score: Option<f64>,
}

/// A box proposed for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// `<image-id>:<index>`, the key used by external score files.
    pub id: String,
    pub hbb: Hbb,
    pub patch: Patch,
}

/// Bilinear resample of the box area to 60x60. The box is clipped to the image
/// first; sample positions outside the image clamp to the border.
pub fn extract_patch(img: &RgbRaster, bx: &Hbb, image_id: &str) -> Result<Patch> {
    let (w, h) = img.dims();
    let clipped = bx
        .clipped(w, h)
        .ok_or_else(|| Error::invalid(format!("box {:?} lies outside the {w}x{h} image", bx)))?;
    let (left, top, _, _) = clipped.edges();
    let sx = clipped.w / PATCH_SIZE as f64;
    let sy = clipped.h / PATCH_SIZE as f64;
    let mut pixels = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for j in 0..PATCH_SIZE {
        let py = (top + (j as f64 + 0.5) * sy).clamp(0.0, (h - 1) as f64);
        for i in 0..PATCH_SIZE {
            let px = (left + (i as f64 + 0.5) * sx).clamp(0.0, (w - 1) as f64);
            pixels.push(bilinear(img, px, py));
        }
    }
    Patch::new(pixels, bx.clone(), image_id)
}

fn bilinear(img: &RgbRaster, x: f64, y: f64) -> Rgb {
    let (w, h) = img.dims();
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    std::array::from_fn(|k| {
        let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
        let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
        (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
    })
}

/// The patch rotated clockwise by 0, 90, 180 and 270 degrees.
pub fn augment(p: &Patch) -> [Patch; 4] {
    let n = PATCH_SIZE;
    let rotate = |src: &Patch| -> Patch {
        let mut out = vec![[0u8; 3]; n * n];
        for y in 0..n {
            for x in 0..n {
                out[x * n + (n - 1 - y)] = src.get(x, y);
            }
        }
        Patch {
            pixels: out,
            ..src.clone()
        }
    };
    let r90 = rotate(p);
    let r180 = rotate(&r90);
    let r270 = rotate(&r180);
    [p.clone(), r90, r180, r270]
}

/// 8-bin hue, saturation and value histograms followed by a 16-bin
/// magnitude-weighted gradient orientation histogram. Each block is
/// L1-normalized; the orientation block is all zeros for a flat patch.
pub fn featurize(p: &Patch) -> Vec<f64> {
    let n = PATCH_SIZE;
    let mut f = vec![0.0; FEATURE_DIM];
    let bin = |v: f64| ((v * COLOR_BINS as f64) as usize).min(COLOR_BINS - 1);
    for &px in p.pixels() {
        let hsv = rgb_to_hsv(px);
        f[bin(hsv.h / 360.0)] += 1.0;
        f[COLOR_BINS + bin(hsv.s)] += 1.0;
        f[2 * COLOR_BINS + bin(hsv.v)] += 1.0;
    }
    let total = (n * n) as f64;
    f[..3 * COLOR_BINS].iter_mut().for_each(|v| *v /= total);

    let lum: Vec<f64> = p.pixels().iter().map(|&px| luma(px)).collect();
    let orient = &mut f[3 * COLOR_BINS..];
    let width = std::f64::consts::TAU / ORIENTATION_BINS as f64;
    for y in 1..n - 1 {
        for x in 1..n - 1 {
            let gx = (lum[y * n + x + 1] - lum[y * n + x - 1]) / 2.0;
            let gy = (lum[(y + 1) * n + x] - lum[(y - 1) * n + x]) / 2.0;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            // bins centered on multiples of the bin width
            let b = ((angle + width / 2.0) / width) as usize % ORIENTATION_BINS;
            orient[b] += mag;
        }
    }
    let mass: f64 = orient.iter().sum();
    if mass > 0.0 {
        orient.iter_mut().for_each(|v| *v /= mass);
    }
    f
}
