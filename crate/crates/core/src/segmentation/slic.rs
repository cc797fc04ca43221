use std::collections::VecDeque;

use super::SuperpixelMap;
use crate::color::{lab_image, LabPixel};
use crate::error::{Error, Result};
use crate::raster::{HeightRaster, RgbRaster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    /// Target number of superpixels.
    pub k: usize,
    /// Weight `m` of the spatial term.
    pub compactness: f64,
    pub iterations: usize,
    /// Combined-distance threshold below which adjacent superpixels merge.
    pub merge_threshold: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k: 2000,
            compactness: 10.0,
            iterations: 10,
            merge_threshold: 8.0,
        }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("slic.k must be >= 1".into()));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::Config("slic.compactness must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("slic.iterations must be >= 1".into()));
        }
        if !(self.merge_threshold >= 0.0) {
            return Err(Error::Config("seg.merge_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: LabPixel,
    x: f64,
    y: f64,
}

const UNASSIGNED: u32 = u32::MAX;

/// SLIC superpixels over CIELAB color and pixel position.
///
/// Pixel-to-center distance is `sqrt(d_lab^2 + (m * d_xy / S)^2)` with
/// `S = sqrt(w * h / k)`; each center only claims pixels in a `2S x 2S` window.
/// Equidistant pixels go to the lower center id. A final pass keeps the largest
/// 4-connected piece of every label and hands each orphan piece to its largest
/// neighbouring superpixel.
pub fn slic(img: &RgbRaster, heights: &HeightRaster, p: &SlicParams) -> Result<SuperpixelMap> {
    p.validate()?;
    let (w, h) = img.dims();
    if heights.dims() != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "VIS {:?} vs DSM {:?}",
            img.dims(),
            heights.dims()
        )));
    }
    let n = w * h;
    if p.k > n {
        return Err(Error::invalid(format!("slic.k = {} exceeds pixel count {n}", p.k)));
    }
    let lab = lab_image(img.pixels());
    let step = (n as f64 / p.k as f64).sqrt();
    let mut centers = seed_centers(&lab, w, h, p.k);
    let (nx, ny) = grid_shape(w, h, p.k);
    let spacing = (w as f64 / nx as f64).max(h as f64 / ny as f64);
    let radius = step.max(spacing).ceil() as i64;
    let spatial = p.compactness / step;

    let mut labels = vec![UNASSIGNED; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..p.iterations {
        labels.fill(UNASSIGNED);
        dist.fill(f64::INFINITY);
        for (id, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                let row = y * w;
                for x in x0..=x1 {
                    let i = row + x;
                    let dx = x as f64 - c.x;
                    let d = lab[i].distance_sq(&c.lab) + spatial * spatial * (dx * dx + dy * dy);
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = id as u32;
                    }
                }
            }
        }
        update_centers(&mut centers, &labels, &lab, w);
    }

    enforce_connectivity(&mut labels, w, h);
    SuperpixelMap::from_labels(w, h, &labels, &lab, Some(heights))
}

/// Seed grid with about `k` cells shaped like the image; on equal counts the
/// wider grid wins.
fn grid_shape(w: usize, h: usize, k: usize) -> (usize, usize) {
    let ideal = (k as f64 * w as f64 / h as f64).sqrt();
    let shape = |nx: f64| {
        let nx = (nx as usize).clamp(1, w);
        let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
        (nx, ny)
    };
    let (wide, narrow) = (shape(ideal.ceil()), shape(ideal.floor()));
    let miss = |(nx, ny): (usize, usize)| (nx * ny).abs_diff(k);
    if miss(narrow) < miss(wide) {
        narrow
    } else {
        wide
    }
}

fn seed_centers(lab: &[LabPixel], w: usize, h: usize, k: usize) -> Vec<Center> {
    let (nx, ny) = grid_shape(w, h, k);
    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        at(xr, y).distance_sq(&at(xl, y)) + at(x, yd).distance_sq(&at(x, yu))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let fx = (i as f64 + 0.5) * w as f64 / nx as f64 - 0.5;
            let fy = (j as f64 + 0.5) * h as f64 / ny as f64 - 0.5;
            let (px, py) = (fx.round() as usize, fy.round() as usize);
            // move off edges: lowest gradient in the 3x3 neighbourhood
            let mut best = (grad(px, py), px, py);
            for y in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for x in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let g = grad(x, y);
                    if g < best.0 {
                        best = (g, x, y);
                    }
                }
            }
            let (x, y) = if best.1 == px && best.2 == py {
                (fx, fy)
            } else {
                (best.1 as f64, best.2 as f64)
            };
            centers.push(Center {
                lab: lab[best.2 * w + best.1],
                x,
                y,
            });
        }
    }
    centers
}

fn update_centers(centers: &mut [Center], labels: &[u32], lab: &[LabPixel], w: usize) {
    let mut sums = vec![[0.0f64; 6]; centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        if l == UNASSIGNED {
            continue;
        }
        let s = &mut sums[l as usize];
        let p = lab[i];
        s[0] += p.l;
        s[1] += p.a;
        s[2] += p.b;
        s[3] += (i % w) as f64;
        s[4] += (i / w) as f64;
        s[5] += 1.0;
    }
    for (c, s) in centers.iter_mut().zip(&sums) {
        if s[5] > 0.0 {
            c.lab = LabPixel {
                l: s[0] / s[5],
                a: s[1] / s[5],
                b: s[2] / s[5],
            };
            c.x = s[3] / s[5];
            c.y = s[4] / s[5];
        }
    }
}

/// 4-connected components of equal labels; returns (component id per pixel, pixel lists).
fn components(labels: &[u32], w: usize, h: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut pieces = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = pieces.len();
        let label = labels[start];
        let mut members = vec![start];
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbors4(i, w, h) {
                if comp[j] == usize::MAX && labels[j] == label {
                    comp[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        pieces.push(members);
    }
    (comp, pieces)
}

pub(crate) fn neighbors4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

fn enforce_connectivity(labels: &mut [u32], w: usize, h: usize) {
    let (comp, pieces) = components(labels, w, h);

    // the largest piece of each label survives, first in scan order on ties
    let mut keeper: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for (id, members) in pieces.iter().enumerate() {
        let label = labels[members[0]];
        if label == UNASSIGNED {
            continue;
        }
        keeper
            .entry(label)
            .and_modify(|k| {
                if pieces[*k].len() < members.len() {
                    *k = id;
                }
            })
            .or_insert(id);
    }
    let mut settled: Vec<bool> = (0..pieces.len())
        .map(|id| keeper.get(&labels[pieces[id][0]]) == Some(&id))
        .collect();
    let mut size_of: std::collections::HashMap<u32, usize> =
        keeper.iter().map(|(&l, &k)| (l, pieces[k].len())).collect();

    let mut orphans: Vec<usize> = (0..pieces.len()).filter(|&id| !settled[id]).collect();
    while !orphans.is_empty() {
        let mut pending = Vec::new();
        for id in orphans {
            let mut best: Option<(usize, u32)> = None;
            for &i in &pieces[id] {
                for j in neighbors4(i, w, h) {
                    let c = comp[j];
                    if c == id || !settled[c] {
                        continue;
                    }
                    let l = labels[j];
                    let s = size_of[&l];
                    if best.is_none_or(|(bs, bl)| s > bs || (s == bs && l < bl)) {
                        best = Some((s, l));
                    }
                }
            }
            match best {
                Some((_, l)) => {
                    for &i in &pieces[id] {
                        labels[i] = l;
                    }
                    *size_of.get_mut(&l).unwrap() += pieces[id].len();
                    settled[id] = true;
                }
                None => pending.push(id),
            }
        }
        if pending.is_empty() {
            break;
        }
        // an image with no surviving label at all: keep the first orphan as its own superpixel
        if settled.iter().all(|&s| !s) {
            let id = pending.remove(0);
            let l = 0;
            for &i in &pieces[id] {
                labels[i] = l;
            }
            size_of.insert(l, pieces[id].len());
            settled[id] = true;
        }
        orphans = pending;
    }
}
