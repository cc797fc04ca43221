//! Detection and ground-truth sets, tiling, branch merging and metrics.

mod metrics;
mod tiling;

pub use metrics::{
    average_precision, evaluate, f1_score, match_boxes, pr_curve, prf1, write_metrics_csv, write_pr_csv, MatchResult,
    MetricsRow, PrPoint,
};
pub use tiling::{merge_branches, stitch, tile, DUPLICATE_IOU};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hbb::Hbb;
use crate::textfmt::{read_text, records, write_text};

pub const DEFAULT_LABEL: &str = "vehicle";

/// Scored boxes per image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub images: BTreeMap<String, Vec<Hbb>>,
}

/// Reference boxes per image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    pub images: BTreeMap<String, Vec<Hbb>>,
}

macro_rules! box_set_common {
    ($t:ty) => {
        impl $t {
            pub fn new() -> Self {
                Self::default()
            }

            pub fn push(&mut self, image: impl Into<String>, b: Hbb) {
                self.images.entry(image.into()).or_default().push(b);
            }

            pub fn boxes(&self, image: &str) -> &[Hbb] {
                self.images.get(image).map_or(&[], Vec::as_slice)
            }

            /// Total number of boxes.
            pub fn len(&self) -> usize {
                self.images.values().map(Vec::len).sum()
            }

            pub fn is_empty(&self) -> bool {
                self.len() == 0
            }
        }
    };
}

box_set_common!(DetectionSet);
box_set_common!(GroundTruthSet);

impl DetectionSet {
    /// Clips every box to a `width x height` image, dropping boxes that fall outside.
    pub fn clipped(&self, width: usize, height: usize) -> Self {
        Self {
            images: self
                .images
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().filter_map(|b| b.clipped(width, height)).collect()))
                .collect(),
        }
    }

    /// Only boxes scoring at least `threshold`.
    pub fn above(&self, threshold: f64) -> Self {
        Self {
            images: self
                .images
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        v.iter().filter(|b| b.score_or_zero() >= threshold).cloned().collect(),
                    )
                })
                .collect(),
        }
    }
}

fn parse_box(rec: &mut crate::textfmt::Fields<'_>) -> Result<Hbb> {
    let line = rec.line;
    let (x, y, w, h) = (rec.f64("x_c")?, rec.f64("y_c")?, rec.f64("w")?, rec.f64("h")?);
    if w < 0.0 || h < 0.0 {
        return Err(Error::parse(line, format!("negative box dimensions {w} x {h}")));
    }
    Ok(Hbb::new(x, y, w, h))
}

fn label_of(b: &Hbb) -> &str {
    b.label.as_deref().unwrap_or(DEFAULT_LABEL)
}

/// Parses `<image-id> <label> <score> <x_c> <y_c> <w> <h>` lines.
pub fn parse_detections(text: &str) -> Result<DetectionSet> {
    let mut set = DetectionSet::new();
    for mut rec in records(text) {
        let line = rec.line;
        let image = rec.str("image-id")?.to_string();
        let label = rec.str("label")?.to_string();
        let score = rec.f64("score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(line, format!("score {score} outside [0, 1]")));
        }
        let b = parse_box(&mut rec)?.with_score(score).with_label(label);
        rec.end()?;
        set.push(image, b);
    }
    Ok(set)
}

pub fn format_detections(set: &DetectionSet) -> String {
    let mut out = String::new();
    for (image, boxes) in &set.images {
        for b in boxes {
            let _ = writeln!(
                out,
                "{image} {} {} {} {} {} {}",
                label_of(b),
                b.score_or_zero(),
                b.x_c,
                b.y_c,
                b.w,
                b.h
            );
        }
    }
    out
}

/// Parses `<image-id> <label> <x_c> <y_c> <w> <h>` lines.
pub fn parse_ground_truth(text: &str) -> Result<GroundTruthSet> {
    let mut set = GroundTruthSet::new();
    for mut rec in records(text) {
        let image = rec.str("image-id")?.to_string();
        let label = rec.str("label")?.to_string();
        let b = parse_box(&mut rec)?.with_label(label);
        rec.end()?;
        set.push(image, b);
    }
    Ok(set)
}

pub fn format_ground_truth(set: &GroundTruthSet) -> String {
    let mut out = String::new();
    for (image, boxes) in &set.images {
        for b in boxes {
            let _ = writeln!(out, "{image} {} {} {} {} {}", label_of(b), b.x_c, b.y_c, b.w, b.h);
        }
    }
    out
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    parse_detections(&read_text(path.as_ref())?)
}

pub fn save_detections(path: impl AsRef<Path>, set: &DetectionSet) -> Result<()> {
    write_text(path.as_ref(), &format_detections(set))
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthSet> {
    parse_ground_truth(&read_text(path.as_ref())?)
}

pub fn save_ground_truth(path: impl AsRef<Path>, set: &GroundTruthSet) -> Result<()> {
    write_text(path.as_ref(), &format_ground_truth(set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_single_line() {
        assert!(parse_detections("").unwrap().is_empty());
        let d = parse_detections("img1 vehicle 0.9 50 50 20 10\n").unwrap();
        assert_eq!(
            d.boxes("img1"),
            &[Hbb::new(50.0, 50.0, 20.0, 10.0).with_score(0.9).with_label("vehicle")]
        );
    }

    #[test]
    fn malformed_lines_report_numbers() {
        for (text, line) in [
            ("img1 vehicle 0.9 50 50 20 10\nimg1 vehicle 0.9 50 50 -2 10\n", 2),
            ("\n\nimg1 vehicle x 1 1 1 1\n", 3),
            ("img1 vehicle 1.2 1 1 1 1\n", 1),
            ("img1 vehicle 0.5 1 1 1\n", 1),
            ("img1 vehicle 0.5 1 1 1 1 7\n", 1),
        ] {
            match parse_detections(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
        assert!(parse_ground_truth("img car 1 1 1 -1\n").is_err());
    }

    fn arb_box() -> impl Strategy<Value = Hbb> {
        (
            -100.0f64..2000.0,
            -100.0f64..2000.0,
            0.0f64..300.0,
            0.0f64..300.0,
            0.0f64..=1.0,
        )
            .prop_map(|(x, y, w, h, s)| Hbb::new(x, y, w, h).with_score(s).with_label("vehicle"))
    }

    proptest! {
        #[test]
        fn detections_round_trip(sets in prop::collection::btree_map("[a-z0-9_]{1,8}", prop::collection::vec(arb_box(), 1..6), 0..5)) {
            let d = DetectionSet { images: sets };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.txt");
            save_detections(&p, &d).unwrap();
            prop_assert_eq!(load_detections(&p).unwrap(), d);
        }

        #[test]
        fn ground_truth_round_trip(boxes in prop::collection::vec(arb_box(), 0..10)) {
            let mut g = GroundTruthSet::new();
            for b in boxes {
                g.push("scene", Hbb { score: None, ..b });
            }
            prop_assert_eq!(parse_ground_truth(&format_ground_truth(&g)).unwrap(), g);
        }
    }
}
