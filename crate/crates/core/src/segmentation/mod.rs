//! Superpixel segmentation of the fused raster and spatial clustering of the
//! resulting superpixels.

mod dbscan;
mod merge;
mod slic;

use std::collections::BTreeSet;

pub use dbscan::{dbscan, ClusterAssignment, DbscanParams};
pub use merge::{merge_distance, merge_similar};
pub use slic::{slic, SlicParams};

use crate::color::LabPixel;
use crate::error::{Error, Result};
use crate::raster::HeightRaster;

#[derive(Debug, Clone, PartialEq)]
pub struct Superpixel {
    pub id: u32,
    /// Mean pixel position `(x, y)`.
    pub centroid: (f64, f64),
    pub mean_lab: LabPixel,
    /// Mean over valid DSM cells; `None` when every cell is nodata.
    pub mean_height: Option<f64>,
    pub size: usize,
    /// Number of valid DSM cells that went into `mean_height`.
    pub height_samples: usize,
}

/// Per-pixel superpixel labels with per-superpixel statistics. Ids are dense,
/// `0..superpixels.len()`, and index both `superpixels` and `adjacency`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    superpixels: Vec<Superpixel>,
    adjacency: Vec<BTreeSet<u32>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accum {
    pub size: f64,
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub h_count: f64,
}

impl Accum {
    pub(crate) fn add(&mut self, o: &Accum) {
        self.size += o.size;
        self.l += o.l;
        self.a += o.a;
        self.b += o.b;
        self.x += o.x;
        self.y += o.y;
        self.h += o.h;
        self.h_count += o.h_count;
    }

    pub(crate) fn of(sp: &Superpixel) -> Self {
        let n = sp.size as f64;
        let hc = sp.height_samples as f64;
        Accum {
            size: n,
            l: sp.mean_lab.l * n,
            a: sp.mean_lab.a * n,
            b: sp.mean_lab.b * n,
            x: sp.centroid.0 * n,
            y: sp.centroid.1 * n,
            h: sp.mean_height.unwrap_or(0.0) * hc,
            h_count: hc,
        }
    }

    pub(crate) fn lab(&self) -> LabPixel {
        LabPixel {
            l: self.l / self.size,
            a: self.a / self.size,
            b: self.b / self.size,
        }
    }

    pub(crate) fn mean_height(&self) -> Option<f64> {
        (self.h_count > 0.0).then(|| self.h / self.h_count)
    }

    fn into_superpixel(self, id: u32) -> Superpixel {
        Superpixel {
            id,
            centroid: (self.x / self.size, self.y / self.size),
            mean_lab: self.lab(),
            mean_height: self.mean_height(),
            size: self.size.round() as usize,
            height_samples: self.h_count.round() as usize,
        }
    }
}

impl SuperpixelMap {
    /// Builds a map from arbitrary per-pixel labels. Labels are renumbered densely
    /// in order of first appearance (raster scan); statistics come from `lab`
    /// and, when given, `heights`.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: &[u32],
        lab: &[LabPixel],
        heights: Option<&HeightRaster>,
    ) -> Result<Self> {
        let n = width * height;
        if labels.len() != n || lab.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} map needs {n} labels and colors, got {} and {}",
                labels.len(),
                lab.len()
            )));
        }
        if let Some(hr) = heights {
            if hr.dims() != (width, height) {
                return Err(Error::DimensionMismatch(format!(
                    "heights are {:?}, labels {width}x{height}",
                    hr.dims()
                )));
            }
        }
        let dense = densify(labels);
        let count = dense.iter().max().map_or(0, |&m| m as usize + 1);
        let mut acc = vec![Accum::default(); count];
        for (i, &id) in dense.iter().enumerate() {
            let a = &mut acc[id as usize];
            let p = lab[i];
            a.size += 1.0;
            a.l += p.l;
            a.a += p.a;
            a.b += p.b;
            a.x += (i % width) as f64;
            a.y += (i / width) as f64;
            if let Some(h) = heights.and_then(|hr| hr.at(i)) {
                a.h += h as f64;
                a.h_count += 1.0;
            }
        }
        Ok(Self::assemble(width, height, dense, acc))
    }

    /// `labels` must already be dense and consistent with `acc`.
    pub(crate) fn assemble(width: usize, height: usize, labels: Vec<u32>, acc: Vec<Accum>) -> Self {
        let mut adjacency = vec![BTreeSet::new(); acc.len()];
        for y in 0..height {
            for x in 0..width {
                let a = labels[y * width + x];
                if x + 1 < width {
                    let b = labels[y * width + x + 1];
                    if a != b {
                        adjacency[a as usize].insert(b);
                        adjacency[b as usize].insert(a);
                    }
                }
                if y + 1 < height {
                    let b = labels[(y + 1) * width + x];
                    if a != b {
                        adjacency[a as usize].insert(b);
                        adjacency[b as usize].insert(a);
                    }
                }
            }
        }
        let superpixels = acc
            .into_iter()
            .enumerate()
            .map(|(id, a)| a.into_superpixel(id as u32))
            .collect();
        Self {
            width,
            height,
            labels,
            superpixels,
            adjacency,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn superpixels(&self) -> &[Superpixel] {
        &self.superpixels
    }

    pub fn len(&self) -> usize {
        self.superpixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpixels.is_empty()
    }

    pub fn adjacency(&self) -> &[BTreeSet<u32>] {
        &self.adjacency
    }

    pub fn neighbors(&self, id: u32) -> &BTreeSet<u32> {
        &self.adjacency[id as usize]
    }

    /// Pixel indices (`y * width + x`) grouped by superpixel id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }
}

/// Renumber labels to `0..n` in order of first appearance.
pub(crate) fn densify(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use std::collections::VecDeque;

    use super::SuperpixelMap;

    /// Independent flood fill: true when every label's pixel set is one 4-connected piece.
    pub fn all_connected(map: &SuperpixelMap) -> bool {
        let (w, h) = (map.width(), map.height());
        let labels = map.labels();
        let mut seen = vec![false; labels.len()];
        let mut pieces = vec![0usize; map.len()];
        for start in 0..labels.len() {
            if seen[start] {
                continue;
            }
            let l = labels[start];
            pieces[l as usize] += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                let mut nb = Vec::with_capacity(4);
                if x > 0 {
                    nb.push(i - 1)
                }
                if x + 1 < w {
                    nb.push(i + 1)
                }
                if y > 0 {
                    nb.push(i - w)
                }
                if y + 1 < h {
                    nb.push(i + w)
                }
                for j in nb {
                    if !seen[j] && labels[j] == l {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        pieces.iter().all(|&p| p == 1)
    }

    pub fn is_partition(map: &SuperpixelMap) -> bool {
        let total: usize = map.superpixels().iter().map(|s| s.size).sum();
        let mut counts = vec![0usize; map.len()];
        for &l in map.labels() {
            match counts.get_mut(l as usize) {
                Some(c) => *c += 1,
                None => return false,
            }
        }
        total == map.width() * map.height() && counts.iter().zip(map.superpixels()).all(|(&c, s)| c == s.size)
    }

    pub fn adjacency_ok(map: &SuperpixelMap) -> bool {
        map.adjacency()
            .iter()
            .enumerate()
            .all(|(a, set)| !set.contains(&(a as u32)) && set.iter().all(|&b| map.neighbors(b).contains(&(a as u32))))
    }
}
