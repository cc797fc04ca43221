//! Horizontal bounding boxes.
//!
//! A box is `(x_c, y_c, w, h)` in pixel units where integer coordinates are pixel
//! centers, so a box covering columns `x0..=x1` has `x_c = (x0 + x1) / 2` and
//! `w = x1 - x0 + 1`. Geometrically it spans `[x_c - w/2, x_c + w/2]`.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct Hbb {
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
    pub score: Option<f64>,
    pub label: Option<String>,
}

impl Hbb {
    pub fn new(x_c: f64, y_c: f64, w: f64, h: f64) -> Self {
        Self {
            x_c,
            y_c,
            w,
            h,
            score: None,
            label: None,
        }
    }

    /// Box covering the inclusive pixel range `[x0, x1] x [y0, y1]`.
    pub fn from_pixel_extent(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self::new(
            (x0 + x1) as f64 / 2.0,
            (y0 + y1) as f64 / 2.0,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
        )
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn score_or_zero(&self) -> f64 {
        self.score.unwrap_or(0.0)
    }

    /// Geometric extent `(left, top, right, bottom)`.
    pub fn edges(&self) -> (f64, f64, f64, f64) {
        (
            self.x_c - self.w / 2.0,
            self.y_c - self.h / 2.0,
            self.x_c + self.w / 2.0,
            self.y_c + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_c: self.x_c + dx,
            y_c: self.y_c + dy,
            ..self.clone()
        }
    }

    /// Pixel (x, y) center lies inside the box.
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        let (l, t, r, b) = self.edges();
        let (x, y) = (x as f64, y as f64);
        l <= x && x <= r && t <= y && y <= b
    }

    /// Clip to the geometric image extent `[-0.5, width - 0.5] x [-0.5, height - 0.5]`.
    /// Returns `None` when less than one pixel of the box remains.
    pub fn clipped(&self, width: usize, height: usize) -> Option<Self> {
        let (l, t, r, b) = self.edges();
        let l = l.max(-0.5);
        let t = t.max(-0.5);
        let r = r.min(width as f64 - 0.5);
        let b = b.min(height as f64 - 0.5);
        if r - l < 1.0 || b - t < 1.0 {
            return None;
        }
        Some(Self {
            x_c: (l + r) / 2.0,
            y_c: (t + b) / 2.0,
            w: r - l,
            h: b - t,
            ..self.clone()
        })
    }

    /// Inclusive pixel range whose centers fall inside the box, clamped to the image.
    pub fn pixel_range(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let (l, t, r, b) = self.edges();
        let x0 = l.ceil().max(0.0);
        let y0 = t.ceil().max(0.0);
        let x1 = r.floor().min(width as f64 - 1.0);
        let y1 = b.floor().min(height as f64 - 1.0);
        (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    fn coords(&self) -> [f64; 4] {
        [self.x_c, self.y_c, self.w, self.h]
    }
}

pub fn iou(a: &Hbb, b: &Hbb) -> f64 {
    let (al, at, ar, ab) = a.edges();
    let (bl, bt, br, bb) = b.edges();
    let iw = (ar.min(br) - al.max(bl)).max(0.0);
    let ih = (ab.min(bb) - at.max(bt)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Descending score, ties by ascending `(x_c, y_c, w, h)`.
pub(crate) fn score_order(a: &Hbb, b: &Hbb) -> Ordering {
    b.score_or_zero().total_cmp(&a.score_or_zero()).then_with(|| {
        a.coords()
            .iter()
            .zip(b.coords().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Greedy duplicate collapse: visit boxes by descending score and drop any box
/// whose IoU with an already kept box exceeds `threshold`. The result does not
/// depend on input order.
pub fn collapse_duplicates(mut boxes: Vec<Hbb>, threshold: f64) -> Vec<Hbb> {
    boxes.sort_by(score_order);
    let mut kept: Vec<Hbb> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if kept.iter().all(|k| iou(k, &b) <= threshold) {
            kept.push(b);
        }
    }
    kept
}
