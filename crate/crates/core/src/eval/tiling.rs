use super::DetectionSet;
use crate::classify::SelectionResult;
use crate::hbb::collapse_duplicates;

/// Boxes overlapping above this IoU are treated as the same object when
/// stitching windows or merging branches.
pub const DUPLICATE_IOU: f64 = 0.7;

fn axis_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o + window < len).collect();
    let last = len - window;
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Window origins `(x, y)` in row-major order. The last window on each axis is
/// shifted back to end exactly at the image edge; images smaller than the
/// window get a single origin.
pub fn tile(dims: (usize, usize), window: usize, stride: usize) -> Vec<(usize, usize)> {
    let stride = stride.max(1);
    let xs = axis_origins(dims.0, window, stride);
    let ys = axis_origins(dims.1, window, stride);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

/// Moves per-window detections into image coordinates and collapses
/// cross-window duplicates.
pub fn stitch(per_tile: &[((usize, usize), DetectionSet)]) -> DetectionSet {
    let mut all = DetectionSet::new();
    for ((ox, oy), set) in per_tile {
        for (image, boxes) in &set.images {
            for b in boxes {
                all.push(image.clone(), b.translated(*ox as f64, *oy as f64));
            }
        }
    }
    collapse_all(all)
}

/// Union of detector output and selected candidates; of two boxes describing
/// the same object the higher-scoring one is kept.
pub fn merge_branches(detections: &DetectionSet, selection: &SelectionResult) -> DetectionSet {
    let mut all = detections.clone();
    for (image, boxes) in selection.selected_boxes() {
        all.images.entry(image).or_default().extend(boxes);
    }
    collapse_all(all)
}

fn collapse_all(set: DetectionSet) -> DetectionSet {
    DetectionSet {
        images: set
            .images
            .into_iter()
            .map(|(k, v)| (k, collapse_duplicates(v, DUPLICATE_IOU)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{Candidate, Patch, ScoredCandidate, PATCH_SIZE};
    use crate::hbb::{iou, Hbb};
    use proptest::prelude::*;

    #[test]
    fn tiling_examples() {
        let t = tile((1216, 1216), 608, 304);
        assert_eq!(t.len(), 9);
        for o in [0, 304, 608] {
            assert!(t.contains(&(o, o)));
        }
        assert_eq!(tile((608, 608), 608, 304), vec![(0, 0)]);
        assert_eq!(tile((700, 608), 608, 304), vec![(0, 0), (92, 0)]);
        assert_eq!(tile((100, 50), 608, 304), vec![(0, 0)]);
    }

    proptest! {
        #[test]
        fn tiles_cover_image(w in 1usize..3000, h in 1usize..3000, window in 16usize..700, stride in 1usize..700) {
            let stride = stride.min(window);
            let t = tile((w, h), window, stride);
            let xs: std::collections::BTreeSet<usize> = t.iter().map(|o| o.0).collect();
            let mut covered = 0;
            for &x in &xs {
                prop_assert!(x <= covered, "gap before {}", x);
                covered = covered.max(x + window);
            }
            prop_assert!(covered >= w);
        }
    }

    fn det(b: Hbb, s: f64) -> DetectionSet {
        let mut d = DetectionSet::new();
        d.push("img", b.with_score(s));
        d
    }

    #[test]
    fn stitch_examples() {
        let one = stitch(&[((304, 0), det(Hbb::new(10.0, 10.0, 20.0, 10.0), 0.8))]);
        assert_eq!(one.boxes("img")[0].x_c, 314.0);

        let a = det(Hbb::new(400.0, 10.0, 20.0, 10.0), 0.8);
        let b = det(Hbb::new(96.0, 10.0, 20.0, 10.0), 0.9);
        let s = stitch(&[((0, 0), a), ((304, 0), b)]);
        assert_eq!(s.boxes("img").len(), 1);
        assert_eq!(s.boxes("img")[0].score, Some(0.9));

        // widths 20 overlapping by 10: IoU 1/3
        let mut two = det(Hbb::new(10.0, 10.0, 20.0, 20.0), 0.5);
        two.push("img", Hbb::new(20.0, 10.0, 20.0, 20.0).with_score(0.6));
        assert_eq!(stitch(&[((0, 0), two)]).len(), 2);
    }

    #[test]
    fn stitch_order_independent() {
        let tiles = vec![
            ((0, 0), det(Hbb::new(300.0, 40.0, 20.0, 50.0), 0.7)),
            ((304, 0), det(Hbb::new(-3.5, 40.0, 20.0, 50.0), 0.7)),
            ((304, 304), det(Hbb::new(5.0, 5.0, 20.0, 50.0), 0.9)),
        ];
        let mut rev = tiles.clone();
        rev.reverse();
        assert_eq!(stitch(&tiles), stitch(&rev));
    }

    fn selection(boxes: &[(Hbb, f64)]) -> SelectionResult {
        let mut r = SelectionResult::empty(0.5);
        for (i, (b, s)) in boxes.iter().enumerate() {
            r.selected.push(ScoredCandidate {
                candidate: Candidate {
                    id: format!("img:{i}"),
                    hbb: b.clone(),
                    patch: Patch::new(vec![[0; 3]; PATCH_SIZE * PATCH_SIZE], b.clone(), "img").unwrap(),
                },
                score: *s,
            });
        }
        r
    }

    #[test]
    fn merge_examples() {
        let d = det(Hbb::new(50.0, 50.0, 20.0, 20.0), 0.7);
        assert_eq!(merge_branches(&d, &SelectionResult::empty(0.9)), d);

        let far = selection(&[(Hbb::new(500.0, 500.0, 20.0, 20.0), 0.95)]);
        assert_eq!(merge_branches(&d, &far).len(), 2);

        // IoU 0.8: 20x20 against 20x16 at the same center
        let near_box = Hbb::new(50.0, 50.0, 20.0, 16.0);
        assert!((iou(&near_box, &Hbb::new(50.0, 50.0, 20.0, 20.0)) - 0.8).abs() < 1e-12);
        let m = merge_branches(&d, &selection(&[(near_box, 0.95)]));
        assert_eq!(m.len(), 1);
        assert_eq!(m.boxes("img")[0].score, Some(0.95));
    }
}
