use std::fmt::Write as _;
use std::path::Path;

use super::{DetectionSet, GroundTruthSet};
use crate::error::Result;
use crate::hbb::{iou, Hbb};
use crate::textfmt::write_text;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(detection index, gt index)` into the inputs of `match_boxes`.
    pub pairs: Vec<(usize, usize)>,
}

impl MatchResult {
    /// Sums the counts of two results; pairs are not carried over.
    pub fn accumulate(&mut self, other: &MatchResult) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn by_score(dets: &[Hbb]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable: equal scores keep input order
    order.sort_by(|&a, &b| dets[b].score_or_zero().total_cmp(&dets[a].score_or_zero()));
    order
}

/// Whether each detection (in descending-score order) found a partner.
fn greedy(dets: &[Hbb], gts: &[Hbb], iou_thr: f64) -> Vec<(usize, Option<usize>)> {
    let mut taken = vec![false; gts.len()];
    by_score(dets)
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(&dets[d], gt);
                if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            (d, best.map(|(g, _)| g))
        })
        .collect()
}

/// Greedy one-to-one matching. Detections are visited by descending score
/// (ties in input order) and each takes the free ground truth with the highest
/// IoU at or above `iou_thr`.
pub fn match_boxes(dets: &[Hbb], gts: &[Hbb], iou_thr: f64) -> MatchResult {
    let pairs: Vec<(usize, usize)> = greedy(dets, gts, iou_thr)
        .into_iter()
        .filter_map(|(d, g)| g.map(|g| (d, g)))
        .collect();
    MatchResult {
        tp: pairs.len(),
        fp: dets.len() - pairs.len(),
        fn_: gts.len() - pairs.len(),
        pairs,
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1; empty denominators give 0.
pub fn prf1(m: &MatchResult) -> (f64, f64, f64) {
    let p = ratio(m.tp, m.tp + m.fp);
    let r = ratio(m.tp, m.tp + m.fn_);
    (p, r, f1_score(p, r))
}

/// Micro-averaged match counts over every image in either set, using only
/// detections scoring at least `score_thr`.
pub fn evaluate(dets: &DetectionSet, gts: &GroundTruthSet, iou_thr: f64, score_thr: f64) -> MatchResult {
    let dets = dets.above(score_thr);
    let mut total = MatchResult::default();
    let images: std::collections::BTreeSet<&String> = dets.images.keys().chain(gts.images.keys()).collect();
    for image in images {
        total.accumulate(&match_boxes(dets.boxes(image), gts.boxes(image), iou_thr));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct detection score, highest first.
///
/// Greedy matching visits detections by descending score, so the matches made
/// with a threshold `t` are exactly the prefix of the full matching that
/// scores `>= t`; a single pass over the full matching yields every point.
pub fn pr_curve(dets: &DetectionSet, gts: &GroundTruthSet, iou_thr: f64) -> Vec<PrPoint> {
    let mut hits: Vec<(f64, bool)> = Vec::new();
    for (image, boxes) in &dets.images {
        for (d, g) in greedy(boxes, gts.boxes(image), iou_thr) {
            hits.push((boxes[d].score_or_zero(), g.is_some()));
        }
    }
    hits.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_gt = gts.len();
    let mut curve = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < hits.len() {
        let t = hits[i].0;
        while i < hits.len() && hits[i].0 == t {
            tp += hits[i].1 as usize;
            seen += 1;
            i += 1;
        }
        curve.push(PrPoint {
            threshold: t,
            precision: ratio(tp, seen),
            recall: ratio(tp, n_gt),
        });
    }
    curve
}

/// `sum_k P(k) * (R(k) - R(k-1))` with `R(0) = 0`, no interpolation.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut prev = 0.0;
    curve
        .iter()
        .map(|p| {
            let area = p.precision * (p.recall - prev);
            prev = p.recall;
            area
        })
        .fold(0.0, |acc, a| acc + a)
}

pub fn write_pr_csv(path: impl AsRef<Path>, curve: &[PrPoint]) -> Result<()> {
    let mut out = String::from("threshold,precision,recall\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
    }
    write_text(path.as_ref(), &out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub factor: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsRow {
    pub fn from_match(factor: f64, m: &MatchResult) -> Self {
        let (precision, recall, f1) = prf1(m);
        Self {
            factor,
            precision,
            recall,
            f1,
        }
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from("factor,precision,recall,f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.factor, r.precision, r.recall, r.f1);
    }
    write_text(path.as_ref(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, s: f64) -> Hbb {
        Hbb::new(x, 10.0, 10.0, 10.0).with_score(s)
    }

    #[test]
    fn exact_detections() {
        let gts: Vec<Hbb> = (0..4).map(|i| Hbb::new(i as f64 * 30.0, 10.0, 10.0, 10.0)).collect();
        let dets: Vec<Hbb> = gts.iter().map(|g| g.clone().with_score(0.9)).collect();
        let m = match_boxes(&dets, &gts, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (4, 0, 0));
    }

    #[test]
    fn two_detections_one_gt() {
        let m = match_boxes(&[b(0.0, 0.9), b(1.0, 0.8)], &[Hbb::new(0.0, 10.0, 10.0, 10.0)], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    #[test]
    fn no_detections() {
        let gts = vec![Hbb::new(0.0, 0.0, 5.0, 5.0); 3];
        let m = match_boxes(&[], &gts, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 3));
        assert_eq!(prf1(&m), (0.0, 0.0, 0.0));
    }

    #[test]
    fn higher_score_takes_the_gt() {
        // the better-fitting detection scores lower and finds the gt taken
        let gts = [Hbb::new(0.0, 10.0, 10.0, 10.0)];
        let m = match_boxes(&[b(2.0, 0.5), b(0.0, 0.4)], &gts, 0.5);
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    #[test]
    fn published_f1_pairs() {
        let (p, r) = (0.96, 0.86);
        assert!((f1_score(p, r) - 0.9073).abs() < 5e-5);
        assert!((f1_score(0.8012, 0.4759) - 0.5971).abs() < 5e-5);
        assert!((f1_score(0.4, 0.4) - 0.4).abs() < 1e-15);
    }

    fn sets(dets: &[Hbb], gts: &[Hbb]) -> (DetectionSet, GroundTruthSet) {
        let mut d = DetectionSet::new();
        let mut g = GroundTruthSet::new();
        dets.iter().for_each(|x| d.push("i", x.clone()));
        gts.iter().for_each(|x| g.push("i", x.clone()));
        (d, g)
    }

    #[test]
    fn ap_examples() {
        let gts = [Hbb::new(0.0, 10.0, 10.0, 10.0), Hbb::new(100.0, 10.0, 10.0, 10.0)];
        let (d, g) = sets(&[b(0.0, 0.9), b(100.0, 0.8)], &gts);
        assert_eq!(average_precision(&pr_curve(&d, &g, 0.5)), 1.0);

        let (d, g) = sets(&[b(0.0, 0.9), b(50.0, 0.8), b(100.0, 0.7)], &gts);
        let ap = average_precision(&pr_curve(&d, &g, 0.5));
        assert!((ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);

        let (d, g) = sets(&[], &gts);
        assert!(pr_curve(&d, &g, 0.5).is_empty());
        assert_eq!(average_precision(&[]), 0.0);
    }

    #[test]
    fn csv_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pr.csv");
        write_pr_csv(
            &p,
            &[PrPoint {
                threshold: 0.9,
                precision: 1.0,
                recall: 0.5,
            }],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "threshold,precision,recall\n0.9,1,0.5\n"
        );
        let m = dir.path().join("m.csv");
        write_metrics_csv(
            &m,
            &[MetricsRow {
                factor: 2.0,
                precision: 0.5,
                recall: 0.25,
                f1: 1.0 / 3.0,
            }],
        )
        .unwrap();
        assert!(std::fs::read_to_string(&m)
            .unwrap()
            .starts_with("factor,precision,recall,f1\n2,0.5,0.25,0.3333"));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Hbb>, Vec<Hbb>)> {
        let bx = (0u8..8, 0u8..4, 0u8..10)
            .prop_map(|(x, y, s)| Hbb::new(x as f64 * 6.0, y as f64 * 6.0, 10.0, 10.0).with_score(s as f64 / 10.0));
        (
            prop::collection::vec(bx.clone(), 0..20),
            prop::collection::vec(bx, 0..10),
        )
    }

    proptest! {
        #[test]
        fn match_counts_consistent((dets, gts) in arb_case(), thr in 0.05f64..1.0) {
            let m = match_boxes(&dets, &gts, thr);
            prop_assert_eq!(m.tp + m.fn_, gts.len());
            prop_assert_eq!(m.tp + m.fp, dets.len());
            prop_assert_eq!(m.tp, m.pairs.len());
        }

        #[test]
        fn recall_non_decreasing((dets, gts) in arb_case()) {
            let (d, g) = sets(&dets, &gts);
            let curve = pr_curve(&d, &g, 0.5);
            prop_assert!(curve.windows(2).all(|w| w[0].recall <= w[1].recall && w[0].threshold > w[1].threshold));
            prop_assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall)));
        }
    }
}
