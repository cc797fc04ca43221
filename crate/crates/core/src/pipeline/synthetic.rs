//! Synthetic aerial scenes with exact ground truth, plus a stub detector that
//! stands in for an externally fine-tuned network.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{stitch, tile, DetectionSet, GroundTruthSet};
use crate::hbb::Hbb;
use crate::raster::{HeightRaster, Rgb, RgbRaster, DEFAULT_NODATA};

pub const VEHICLE_HEIGHT: f32 = 1.8;
pub const SCENE_GSD: f64 = 0.1;

const VEHICLE_PALETTE: [Rgb; 8] = [
    [196, 32, 36],
    [34, 62, 170],
    [232, 232, 228],
    [38, 38, 44],
    [176, 178, 186],
    [222, 178, 24],
    [120, 30, 118],
    [22, 136, 156],
];

const ROOF_PALETTE: [Rgb; 4] = [[150, 146, 140], [168, 84, 60], [104, 100, 98], [196, 190, 176]];

const MAX_PLACEMENT_TRIES: usize = 2000;
const OBJECT_GAP: usize = 8;
const SHADOW_WIDTH: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image_id: String,
    pub vis: RgbRaster,
    pub dsm: HeightRaster,
    pub gts: GroundTruthSet,
    /// Building footprints, for checking that they never become labels.
    pub buildings: Vec<Hbb>,
    pub seed: u64,
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn sized(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self {
            x0,
            y0,
            x1: x0 + w - 1,
            y1: y0 + h - 1,
        }
    }

    fn grown(&self, by: usize) -> (isize, isize, isize, isize) {
        let by = by as isize;
        (
            self.x0 as isize - by,
            self.y0 as isize - by,
            self.x1 as isize + by,
            self.y1 as isize + by,
        )
    }

    fn clashes(&self, other: &Rect, gap: usize) -> bool {
        let (ax0, ay0, ax1, ay1) = self.grown(gap);
        let (bx0, by0) = (other.x0 as isize, other.y0 as isize);
        let (bx1, by1) = (other.x1 as isize, other.y1 as isize);
        !(ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0)
    }

    fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| (x, y)))
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: Rgb, amp: i32) -> Rgb {
    c.map(|v| (v as i32 + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8)
}

fn place(rng: &mut ChaCha8Rng, dims: (usize, usize), size: (usize, usize), taken: &[Rect], what: &str) -> Result<Rect> {
    let (w, h) = dims;
    if size.0 + 2 > w || size.1 + 2 > h {
        return Err(Error::invalid(format!(
            "{what} of {}x{} px does not fit a {w}x{h} scene",
            size.0, size.1
        )));
    }
    for _ in 0..MAX_PLACEMENT_TRIES {
        let r = Rect::sized(
            rng.gen_range(1..w - size.0),
            rng.gen_range(1..h - size.1),
            size.0,
            size.1,
        );
        if taken.iter().all(|t| !r.clashes(t, OBJECT_GAP)) {
            return Ok(r);
        }
    }
    Err(Error::invalid(format!(
        "could not place {what} without overlap after {MAX_PLACEMENT_TRIES} attempts"
    )))
}

/// Grass background with buildings (6-12 m blocks) and 2 m x 5 m vehicles
/// standing 1.8 m above ground, each casting a dark shadow strip. Scene GSD
/// is 0.1 m.
pub fn generate_synthetic(
    seed: u64,
    n_vehicles: usize,
    n_buildings: usize,
    dims: (usize, usize),
) -> Result<SyntheticScene> {
    let (w, h) = dims;
    if w < 128 || h < 128 {
        return Err(Error::invalid(format!(
            "synthetic scenes need at least 128x128 pixels, got {w}x{h}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grass: Rgb = [rng.gen_range(60..80), rng.gen_range(112..132), rng.gen_range(44..60)];
    let mut pixels: Vec<Rgb> = (0..w * h).map(|_| jitter(&mut rng, grass, 5)).collect();
    let mut heights: Vec<f32> = (0..w * h).map(|_| rng.gen_range(-0.05..0.05)).collect();

    let mut taken: Vec<Rect> = Vec::new();
    let mut buildings = Vec::new();
    for _ in 0..n_buildings {
        let side = (rng.gen_range(120..200), rng.gen_range(120..200));
        let r = place(&mut rng, dims, side, &taken, "building")?;
        let roof = ROOF_PALETTE[rng.gen_range(0..ROOF_PALETTE.len())];
        let top: f32 = rng.gen_range(6.0..12.0);
        for (x, y) in r.pixels() {
            pixels[y * w + x] = jitter(&mut rng, roof, 4);
            heights[y * w + x] = top + rng.gen_range(-0.05..0.05);
        }
        taken.push(r);
        buildings.push(Hbb::from_pixel_extent(r.x0, r.y0, r.x1, r.y1));
    }

    let mut gts = GroundTruthSet::new();
    let image_id = "scene".to_string();
    for _ in 0..n_vehicles {
        let horizontal = rng.gen_bool(0.5);
        let (vw, vh) = if horizontal { (50, 20) } else { (20, 50) };
        // footprint includes the shadow cast to the right and below
        let fp = place(
            &mut rng,
            dims,
            (vw + SHADOW_WIDTH, vh + SHADOW_WIDTH),
            &taken,
            "vehicle",
        )?;
        let body = Rect::sized(fp.x0, fp.y0, vw, vh);
        let base = VEHICLE_PALETTE[rng.gen_range(0..VEHICLE_PALETTE.len())];
        let paint = jitter(&mut rng, base, 10);
        let roof_h = VEHICLE_HEIGHT + rng.gen_range(-0.05..0.05);
        for (x, y) in fp.pixels() {
            let i = y * w + x;
            if x <= body.x1 && y <= body.y1 {
                pixels[i] = jitter(&mut rng, paint, 3);
                heights[i] = roof_h + rng.gen_range(-0.03..0.03);
            } else if x >= body.x0 + SHADOW_WIDTH && y >= body.y0 + SHADOW_WIDTH {
                pixels[i] = pixels[i].map(|v| (v as f32 * 0.45) as u8);
            }
        }
        taken.push(fp);
        gts.push(
            image_id.clone(),
            Hbb::from_pixel_extent(body.x0, body.y0, body.x1, body.y1).with_label("vehicle"),
        );
    }
    gts.images.entry(image_id.clone()).or_default();

    Ok(SyntheticScene {
        image_id,
        vis: RgbRaster::new(w, h, pixels)?.with_gsd(SCENE_GSD),
        dsm: HeightRaster::new(w, h, heights, DEFAULT_NODATA)?,
        gts,
        buildings,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubDetector {
    /// Share of ground-truth objects the detector finds.
    pub recall: f64,
    /// Maximum jitter of box centers and sizes, pixels.
    pub noise: f64,
    pub min_score: f64,
    pub max_score: f64,
    pub window: usize,
    pub stride: usize,
}

impl Default for StubDetector {
    fn default() -> Self {
        Self {
            recall: 0.6,
            noise: 1.0,
            min_score: 0.6,
            max_score: 0.95,
            window: 608,
            stride: 304,
        }
    }
}

impl StubDetector {
    /// Runs window by window over the scene and stitches the results. A
    /// detected object is reported by every window containing its center.
    pub fn detect(&self, gts: &GroundTruthSet, dims: (usize, usize), seed: u64) -> DetectionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut per_tile = Vec::new();
        for (image, boxes) in &gts.images {
            let mut found: Vec<&Hbb> = boxes.iter().collect();
            found.shuffle(&mut rng);
            found.truncate((self.recall * boxes.len() as f64).round() as usize);
            for (ox, oy) in tile(dims, self.window, self.stride) {
                let mut local = DetectionSet::new();
                let (x_end, y_end) = ((ox + self.window) as f64, (oy + self.window) as f64);
                for b in &found {
                    if !(ox as f64 <= b.x_c && b.x_c < x_end && oy as f64 <= b.y_c && b.y_c < y_end) {
                        continue;
                    }
                    let mut noisy = || rng.gen_range(-self.noise..=self.noise);
                    let d = Hbb::new(
                        b.x_c - ox as f64 + noisy(),
                        b.y_c - oy as f64 + noisy(),
                        (b.w + noisy()).max(1.0),
                        (b.h + noisy()).max(1.0),
                    );
                    let score = rng.gen_range(self.min_score..=self.max_score);
                    local.push(image.clone(), d.with_score(score).with_label("vehicle"));
                }
                per_tile.push(((ox, oy), local));
            }
        }
        stitch(&per_tile).clipped(dims.0, dims.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene() {
        let s = generate_synthetic(1, 0, 0, (128, 128)).unwrap();
        assert!(s.gts.is_empty());
        assert!(generate_synthetic(1, 0, 0, (100, 128)).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate_synthetic(5, 4, 1, (256, 256)).unwrap(),
            generate_synthetic(5, 4, 1, (256, 256)).unwrap()
        );
    }

    #[test]
    fn thirty_vehicles_at_car_height() {
        let s = generate_synthetic(42, 30, 5, (1024, 1024)).unwrap();
        let boxes = s.gts.boxes("scene");
        assert_eq!(boxes.len(), 30);
        for b in boxes {
            let (x0, y0, x1, y1) = b.pixel_range(1024, 1024).unwrap();
            assert_eq!((x1 - x0 + 1) * (y1 - y0 + 1), 1000);
            let vals: Vec<f64> = (y0..=y1)
                .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
                .map(|(x, y)| s.dsm.get(x, y).unwrap() as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((1.7..=1.9).contains(&mean), "mean height {mean}");
            assert!(vals.iter().all(|v| (1.2..=2.8).contains(v)));
        }
        assert_eq!(s.buildings.len(), 5);
    }

    #[test]
    fn overcrowding_fails() {
        assert!(generate_synthetic(3, 400, 0, (128, 128)).is_err());
    }

    #[test]
    fn stub_recall_and_noise() {
        let s = generate_synthetic(9, 20, 0, (900, 700)).unwrap();
        let stub = StubDetector::default();
        let d = stub.detect(&s.gts, (900, 700), 3);
        assert_eq!(d.len(), 12);
        for b in d.boxes("scene") {
            let best = s
                .gts
                .boxes("scene")
                .iter()
                .map(|g| crate::hbb::iou(g, b))
                .fold(0.0, f64::max);
            assert!(best > 0.85);
            assert!((0.6..=0.95).contains(&b.score_or_zero()));
        }
        let none = StubDetector { recall: 0.0, ..stub }.detect(&s.gts, (900, 700), 3);
        assert!(none.is_empty());
    }
}
