//! Candidate-object regions: height and area selection over superpixel
//! clusters, morphological smoothing, connectivity splitting and box fitting.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::hbb::Hbb;
use crate::raster::{luma, HeightRaster, RgbRaster};
use crate::segmentation::{ClusterAssignment, SuperpixelMap};

/// Pixel coordinates `(x, y)`.
pub type Mask = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub mask: Mask,
    pub area: usize,
    /// Mean height above the ground estimate, meters.
    pub avg_height: f64,
    pub source_cluster: u32,
}

impl Region {
    pub fn new(mask: Mask, avg_height: f64, source_cluster: u32) -> Self {
        Self {
            area: mask.len(),
            mask,
            avg_height,
            source_cluster,
        }
    }

    /// Inclusive `(x0, y0, x1, y1)`; `None` for an empty mask.
    pub fn extent(&self) -> Option<(usize, usize, usize, usize)> {
        mask_extent(&self.mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub height_low: f64,
    pub height_high: f64,
    /// Upper (exclusive) area bound in pixels.
    pub area_th: f64,
    /// Lower (inclusive) area bound in pixels.
    pub area_floor: f64,
    /// Half-width of the square structuring element.
    pub kernel: usize,
}

impl SelectionParams {
    /// Area bounds anchored to a 2 m x 5 m vehicle footprint at the given GSD.
    pub fn for_gsd(gsd: f64) -> Self {
        let footprint = 10.0 / (gsd * gsd);
        Self {
            height_low: 0.8,
            height_high: 3.5,
            area_th: 5.0 * footprint,
            area_floor: 0.2 * footprint,
            kernel: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height_low < self.height_high) {
            return Err(Error::Config(format!(
                "select.height_low ({}) must be below select.height_high ({})",
                self.height_low, self.height_high
            )));
        }
        if !(0.0 < self.area_floor && self.area_floor < self.area_th) {
            return Err(Error::Config(format!(
                "need 0 < select.area_floor ({}) < select.area_th ({})",
                self.area_floor, self.area_th
            )));
        }
        Ok(())
    }
}

/// Median of the valid DSM cells, used as the ground level of a tile.
pub fn ground_estimate(dsm: &HeightRaster) -> Option<f64> {
    let mut v: Vec<f32> = dsm.valid_values().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f32::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] as f64 + v[mid] as f64) / 2.0
    })
}

/// One region per cluster whose mean height above `ground` lies in
/// `[low, high]`. Clusters without any valid height are dropped.
pub fn height_filter(
    clusters: &ClusterAssignment,
    sp: &SuperpixelMap,
    ground: f64,
    interval: (f64, f64),
) -> Vec<Region> {
    let members = sp.members();
    let w = sp.width();
    clusters
        .clusters()
        .into_iter()
        .enumerate()
        .filter_map(|(cid, items)| {
            let (sum, count) = items.iter().fold((0.0, 0usize), |(s, c), &i| {
                let p = &sp.superpixels()[i];
                match p.mean_height {
                    Some(h) => (s + h * p.height_samples as f64, c + p.height_samples),
                    None => (s, c),
                }
            });
            if count == 0 {
                return None;
            }
            let rel = sum / count as f64 - ground;
            if !(interval.0 <= rel && rel <= interval.1) {
                return None;
            }
            let mask: Mask = items
                .iter()
                .flat_map(|&i| members[i].iter().map(move |&p| (p % w, p / w)))
                .collect();
            Some(Region::new(mask, rel, cid as u32))
        })
        .collect()
}

/// Keeps regions with `floor <= area < th`, largest first.
pub fn area_filter(regions: Vec<Region>, th: f64, floor: f64) -> Vec<Region> {
    let mut kept: Vec<Region> = regions
        .into_iter()
        .filter(|r| {
            let a = r.area as f64;
            floor <= a && a < th
        })
        .collect();
    kept.sort_by_key(|r| std::cmp::Reverse(r.area));
    kept
}

fn mask_extent(mask: &Mask) -> Option<(usize, usize, usize, usize)> {
    let mut it = mask.iter();
    let &(x, y) = it.next()?;
    Some(it.fold((x, y, x, y), |(x0, y0, x1, y1), &(x, y)| {
        (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
    }))
}

/// A mask rasterized into a local canvas with `pad` pixels of margin.
struct Canvas {
    ox: isize,
    oy: isize,
    w: usize,
    h: usize,
    cells: Vec<bool>,
}

impl Canvas {
    fn from_mask(mask: &Mask, pad: usize) -> Option<Self> {
        let (x0, y0, x1, y1) = mask_extent(mask)?;
        let (ox, oy) = (x0 as isize - pad as isize, y0 as isize - pad as isize);
        let (w, h) = (x1 - x0 + 1 + 2 * pad, y1 - y0 + 1 + 2 * pad);
        let mut cells = vec![false; w * h];
        for &(x, y) in mask {
            cells[(y as isize - oy) as usize * w + (x as isize - ox) as usize] = true;
        }
        Some(Self { ox, oy, w, h, cells })
    }

    /// Dilation (`any`) or erosion (`all`) with a square element; cells
    /// outside the canvas count as unset.
    fn morph(&self, half: usize, dilate: bool) -> Self {
        let half = half as isize;
        let mut cells = vec![false; self.cells.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let mut hit = !dilate;
                'window: for dy in -half..=half {
                    for dx in -half..=half {
                        let (nx, ny) = (x + dx, y + dy);
                        let set = nx >= 0
                            && ny >= 0
                            && (nx as usize) < self.w
                            && (ny as usize) < self.h
                            && self.cells[ny as usize * self.w + nx as usize];
                        if dilate && set {
                            hit = true;
                            break 'window;
                        }
                        if !dilate && !set {
                            hit = false;
                            break 'window;
                        }
                    }
                }
                cells[y as usize * self.w + x as usize] = hit;
            }
        }
        Self { cells, ..*self }
    }

    fn to_mask(&self) -> Mask {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .filter_map(|(i, _)| {
                let x = (i % self.w) as isize + self.ox;
                let y = (i / self.w) as isize + self.oy;
                (x >= 0 && y >= 0).then_some((x as usize, y as usize))
            })
            .collect()
    }
}

pub fn dilate(mask: &Mask, half: usize) -> Mask {
    match Canvas::from_mask(mask, half) {
        Some(c) => c.morph(half, true).to_mask(),
        None => Mask::new(),
    }
}

/// Morphological closing (dilate, then erode) with a `(2 * half + 1)` square.
pub fn close_region(mask: &Mask, half: usize) -> Mask {
    if half == 0 {
        return mask.clone();
    }
    match Canvas::from_mask(mask, 2 * half) {
        Some(c) => c.morph(half, true).morph(half, false).to_mask(),
        None => Mask::new(),
    }
}

/// 4-connected components, ordered by their first pixel in raster order.
pub fn split_connected(mask: &Mask) -> Vec<Mask> {
    let mut remaining = mask.clone();
    let mut starts: Vec<(usize, usize)> = mask.iter().copied().collect();
    starts.sort_by_key(|&(x, y)| (y, x));
    let mut out = Vec::new();
    for s in starts {
        if !remaining.remove(&s) {
            continue;
        }
        let mut comp = Mask::new();
        let mut queue = VecDeque::from([s]);
        comp.insert(s);
        while let Some((x, y)) = queue.pop_front() {
            let nbs = [
                x.checked_sub(1).map(|x| (x, y)),
                Some((x + 1, y)),
                y.checked_sub(1).map(|y| (x, y)),
                Some((x, y + 1)),
            ];
            for nb in nbs.into_iter().flatten() {
                if remaining.remove(&nb) {
                    comp.insert(nb);
                    queue.push_back(nb);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Splits a region into its 4-connected pieces, each keeping the parent's
/// height and cluster.
pub fn split_region(region: &Region) -> Vec<Region> {
    split_connected(&region.mask)
        .into_iter()
        .map(|m| Region::new(m, region.avg_height, region.source_cluster))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisParams {
    pub k: f64,
    /// Minimum response as a fraction of the strongest response in the region.
    pub relative_threshold: f64,
    /// How far outside the mask corners are searched.
    pub search_margin: usize,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self {
            k: 0.04,
            relative_threshold: 0.01,
            search_margin: 1,
        }
    }
}

/// Harris corner candidates `(x, y, response)` inside `search`, strongest first.
pub fn harris_corners(img: &RgbRaster, search: &Mask, params: &HarrisParams) -> Vec<(usize, usize, f64)> {
    let Some((x0, y0, x1, y1)) = mask_extent(search) else {
        return Vec::new();
    };
    let (w, h) = img.dims();
    // crop with room for the Sobel and window supports
    let cx0 = x0.saturating_sub(3);
    let cy0 = y0.saturating_sub(3);
    let cx1 = (x1 + 3).min(w - 1);
    let cy1 = (y1 + 3).min(h - 1);
    let cw = cx1 - cx0 + 1;
    let ch = cy1 - cy0 + 1;
    let lum = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma(img.get(x, y))
    };
    let mut ixx = vec![0.0; cw * ch];
    let mut iyy = vec![0.0; cw * ch];
    let mut ixy = vec![0.0; cw * ch];
    for y in 0..ch {
        for x in 0..cw {
            let (gx, gy) = ((cx0 + x) as isize, (cy0 + y) as isize);
            let dx = (lum(gx + 1, gy - 1) + 2.0 * lum(gx + 1, gy) + lum(gx + 1, gy + 1))
                - (lum(gx - 1, gy - 1) + 2.0 * lum(gx - 1, gy) + lum(gx - 1, gy + 1));
            let dy = (lum(gx - 1, gy + 1) + 2.0 * lum(gx, gy + 1) + lum(gx + 1, gy + 1))
                - (lum(gx - 1, gy - 1) + 2.0 * lum(gx, gy - 1) + lum(gx + 1, gy - 1));
            let i = y * cw + x;
            ixx[i] = dx * dx;
            iyy[i] = dy * dy;
            ixy[i] = dx * dy;
        }
    }
    let mut response = vec![f64::NEG_INFINITY; cw * ch];
    for y in 0..ch {
        for x in 0..cw {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for yy in y.saturating_sub(1)..=(y + 1).min(ch - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(cw - 1) {
                    let j = yy * cw + xx;
                    a += ixx[j];
                    b += iyy[j];
                    c += ixy[j];
                }
            }
            response[y * cw + x] = a * b - c * c - params.k * (a + b) * (a + b);
        }
    }
    let at = |x: usize, y: usize| response[(y - cy0) * cw + (x - cx0)];
    let max = search.iter().map(|&(x, y)| at(x, y)).fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let threshold = params.relative_threshold * max;
    let mut corners: Vec<(usize, usize, f64)> = search
        .iter()
        .filter_map(|&(x, y)| {
            let r = at(x, y);
            if r <= threshold {
                return None;
            }
            let is_peak = (y.saturating_sub(1).max(cy0)..=(y + 1).min(cy1))
                .all(|yy| (x.saturating_sub(1).max(cx0)..=(x + 1).min(cx1)).all(|xx| at(xx, yy) <= r));
            is_peak.then_some((x, y, r))
        })
        .collect();
    corners.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    corners
}

/// Horizontal box for a region. Harris corners near the region give a diagonal
/// (strongest corner plus the corner farthest from it); the box spanned by
/// that diagonal is grown to cover every mask pixel. With fewer than two
/// corners the tight box of the mask is used.
pub fn region_to_hbb(region: &Region, img: &RgbRaster, params: &HarrisParams) -> Option<Hbb> {
    let (mut x0, mut y0, mut x1, mut y1) = region.extent()?;
    let (w, h) = img.dims();
    if x1 >= w || y1 >= h {
        return None;
    }
    let search: Mask = dilate(&region.mask, params.search_margin)
        .into_iter()
        .filter(|&(x, y)| x < w && y < h)
        .collect();
    let corners = harris_corners(img, &search, params);
    if corners.len() >= 2 {
        let (ax, ay, _) = corners[0];
        let far = corners[1..]
            .iter()
            .max_by(|a, b| {
                let da = (a.0 as f64 - ax as f64).hypot(a.1 as f64 - ay as f64);
                let db = (b.0 as f64 - ax as f64).hypot(b.1 as f64 - ay as f64);
                // prefer the stronger (earlier) corner on equal distance
                da.total_cmp(&db).then(b.2.total_cmp(&a.2))
            })
            .copied()
            .unwrap();
        x0 = x0.min(ax).min(far.0);
        y0 = y0.min(ay).min(far.1);
        x1 = x1.max(ax).max(far.0);
        y1 = y1.max(ay).max(far.1);
    }
    Some(Hbb::from_pixel_extent(x0, y0, x1, y1))
}
