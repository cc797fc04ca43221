//! Seeded inputs shared by the benchmarks.

use autolabel_core::eval::{DetectionSet, GroundTruthSet};
use autolabel_core::hbb::Hbb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clustered `(x, y, h)` points in meters, as DBSCAN sees superpixels.
pub fn clustered_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 3]> = (0..(n / 10).max(1))
        .map(|_| {
            [
                rng.gen_range(0.0..100.0),
                rng.gen_range(0.0..100.0),
                rng.gen_range(0.0..3.0),
            ]
        })
        .collect();
    (0..n)
        .map(|_| {
            let c = centers[rng.gen_range(0..centers.len())];
            [
                c[0] + rng.gen_range(-2.0..2.0),
                c[1] + rng.gen_range(-2.0..2.0),
                c[2] + rng.gen_range(-0.1..0.1),
            ]
        })
        .collect()
}

/// Ground truth on one image and noisy scored detections around it, plus clutter.
pub fn detections(n_gt: usize, seed: u64) -> (DetectionSet, GroundTruthSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gts = GroundTruthSet::new();
    let mut dets = DetectionSet::new();
    for _ in 0..n_gt {
        let g = Hbb::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0), 20.0, 50.0);
        if rng.gen_bool(0.8) {
            let d = g.translated(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            dets.push("tile", d.with_score(rng.gen_range(0.0..1.0)));
        }
        gts.push("tile", g);
    }
    for _ in 0..n_gt / 4 {
        let d = Hbb::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0), 20.0, 50.0);
        dets.push("tile", d.with_score(rng.gen_range(0.0..1.0)));
    }
    (dets, gts)
}
