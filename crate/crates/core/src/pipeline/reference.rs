//! Labeled reference samples drawn from a separately seeded synthetic scene,
//! standing in for the annotated source dataset a detector is pre-trained on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::generate_synthetic;
use crate::classify::{extract_patch, Label, LabeledSample, Origin};
use crate::error::Result;
use crate::hbb::{iou, Hbb};

const REFERENCE_DIMS: (usize, usize) = (640, 640);
const REFERENCE_VEHICLES: usize = 16;
const REFERENCE_BUILDINGS: usize = 2;
const NEGATIVES_PER_POSITIVE: usize = 3;

/// Vehicle patches from the ground truth plus background windows of vehicle
/// size (grass, shadows, roofs) and half-shifted views of vehicles.
pub fn reference_samples(seed: u64) -> Result<Vec<LabeledSample>> {
    let scene = generate_synthetic(seed, REFERENCE_VEHICLES, REFERENCE_BUILDINGS, REFERENCE_DIMS)?;
    let id = format!("reference-{seed}");
    let gts = scene.gts.boxes(&scene.image_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let sample = |b: &Hbb, label: Label| -> Result<LabeledSample> {
        Ok(LabeledSample {
            patch: extract_patch(&scene.vis, b, &id)?,
            label,
            origin: Origin::ReferenceSet,
            score: None,
        })
    };

    let mut out = Vec::new();
    for g in gts {
        out.push(sample(g, Label::Vehicle)?);
        let shift = if g.w > g.h { (g.w * 0.6, 0.0) } else { (0.0, g.h * 0.6) };
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let partial = g.translated(sign * shift.0, sign * shift.1);
        if partial.clipped(REFERENCE_DIMS.0, REFERENCE_DIMS.1).is_some() {
            out.push(sample(&partial, Label::NonVehicle)?);
        }
    }
    let (w, h) = REFERENCE_DIMS;
    let mut background = 0;
    while background < NEGATIVES_PER_POSITIVE * gts.len() {
        let (bw, bh) = if rng.gen_bool(0.5) { (50.0, 20.0) } else { (20.0, 50.0) };
        let scale: f64 = rng.gen_range(0.6..1.6);
        let (bw, bh) = (bw * scale, bh * scale);
        let b = Hbb::new(
            rng.gen_range(bw / 2.0..w as f64 - bw / 2.0),
            rng.gen_range(bh / 2.0..h as f64 - bh / 2.0),
            bw,
            bh,
        );
        if gts.iter().all(|g| iou(g, &b) < 0.05) {
            out.push(sample(&b, Label::NonVehicle)?);
            background += 1;
        }
    }
    Ok(out)
}
