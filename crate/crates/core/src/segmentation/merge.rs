use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use super::{Accum, SuperpixelMap};
use crate::color::LabPixel;

/// `|lab_a - lab_b| + lambda_h * |h_a - h_b|`. A superpixel without height data
/// never merges with one that has it.
pub fn merge_distance(lab_a: &LabPixel, h_a: Option<f64>, lab_b: &LabPixel, h_b: Option<f64>, lambda_h: f64) -> f64 {
    let height = match (h_a, h_b) {
        (Some(a), Some(b)) => lambda_h * (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    lab_a.distance(lab_b) + height
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    dist: f64,
    a: u32,
    b: u32,
    ver_a: u32,
    ver_b: u32,
}

impl Eq for Edge {}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Node {
    acc: Accum,
    neighbors: BTreeSet<u32>,
    version: u32,
    alive: bool,
}

/// Repeatedly unions the adjacent pair with the smallest merge distance while
/// that distance is below `threshold`, recomputing statistics after every
/// union. Equal distances are resolved by `(min id, max id)`.
pub fn merge_similar(sp: &SuperpixelMap, threshold: f64, lambda_h: f64) -> SuperpixelMap {
    let mut nodes: Vec<Node> = sp
        .superpixels()
        .iter()
        .zip(sp.adjacency())
        .map(|(s, adj)| Node {
            acc: Accum::of(s),
            neighbors: adj.clone(),
            version: 0,
            alive: true,
        })
        .collect();
    let mut parent: Vec<u32> = (0..nodes.len() as u32).collect();

    let edge = |nodes: &[Node], a: u32, b: u32| {
        let (a, b) = (a.min(b), a.max(b));
        let (na, nb) = (&nodes[a as usize], &nodes[b as usize]);
        Edge {
            dist: merge_distance(
                &na.acc.lab(),
                na.acc.mean_height(),
                &nb.acc.lab(),
                nb.acc.mean_height(),
                lambda_h,
            ),
            a,
            b,
            ver_a: na.version,
            ver_b: nb.version,
        }
    };

    let mut heap = BinaryHeap::new();
    for (a, node) in nodes.iter().enumerate() {
        for &b in node.neighbors.range(a as u32 + 1..) {
            heap.push(Reverse(edge(&nodes, a as u32, b)));
        }
    }

    while let Some(Reverse(e)) = heap.pop() {
        let (na, nb) = (&nodes[e.a as usize], &nodes[e.b as usize]);
        if !na.alive || !nb.alive || na.version != e.ver_a || nb.version != e.ver_b {
            continue;
        }
        if !(e.dist < threshold) {
            break;
        }
        // absorb b into a (a is the smaller id)
        let absorbed = std::mem::take(&mut nodes[e.b as usize].neighbors);
        let acc_b = nodes[e.b as usize].acc;
        nodes[e.b as usize].alive = false;
        parent[e.b as usize] = e.a;
        for &n in &absorbed {
            if n != e.a {
                let set = &mut nodes[n as usize].neighbors;
                set.remove(&e.b);
                set.insert(e.a);
            }
        }
        let node_a = &mut nodes[e.a as usize];
        node_a.acc.add(&acc_b);
        node_a.version += 1;
        node_a.neighbors.remove(&e.b);
        node_a.neighbors.extend(absorbed.into_iter().filter(|&n| n != e.a));
        let neighbors: Vec<u32> = node_a.neighbors.iter().copied().collect();
        for n in neighbors {
            heap.push(Reverse(edge(&nodes, e.a, n)));
        }
    }

    fn root(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            let p = parent[i as usize];
            parent[i as usize] = parent[p as usize];
            i = p;
        }
        i
    }

    // surviving ids keep their relative order
    let mut new_id = vec![u32::MAX; nodes.len()];
    let mut acc = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        if node.alive {
            new_id[i] = acc.len() as u32;
            acc.push(node.acc);
        }
    }
    let labels = sp
        .labels()
        .iter()
        .map(|&l| new_id[root(&mut parent, l) as usize])
        .collect();
    SuperpixelMap::assemble(sp.width(), sp.height(), labels, acc)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::raster::HeightRaster;

    fn lab(l: f64) -> LabPixel {
        LabPixel { l, a: 0.0, b: 0.0 }
    }

    fn strip(ls: &[f64]) -> SuperpixelMap {
        let labels: Vec<u32> = (0..ls.len() as u32).collect();
        let colors: Vec<LabPixel> = ls.iter().map(|&l| lab(l)).collect();
        let heights = HeightRaster::filled(ls.len(), 1, 0.0).unwrap();
        SuperpixelMap::from_labels(ls.len(), 1, &labels, &colors, Some(&heights)).unwrap()
    }

    /// Exhaustive simulation: at each step scan every adjacent pair for the
    /// smallest distance and merge it, recomputing means from member pixels.
    fn oracle(ls: &[f64], threshold: f64) -> Vec<usize> {
        let mut group: Vec<usize> = (0..ls.len()).collect();
        loop {
            let mean = |g: usize, group: &[usize]| {
                let m: Vec<f64> = ls.iter().zip(group).filter(|(_, &x)| x == g).map(|(l, _)| *l).collect();
                m.iter().sum::<f64>() / m.len() as f64
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..ls.len() - 1 {
                let (a, b) = (group[i], group[i + 1]);
                if a == b {
                    continue;
                }
                let d = (mean(a, &group) - mean(b, &group)).abs();
                let key = (d, a.min(b), a.max(b));
                if best.is_none_or(|bst| key.0 < bst.0 || (key.0 == bst.0 && (key.1, key.2) < (bst.1, bst.2))) {
                    best = Some(key);
                }
            }
            match best {
                Some((d, a, b)) if d < threshold => group.iter_mut().for_each(|g| {
                    if *g == b {
                        *g = a
                    }
                }),
                _ => return group,
            }
        }
    }

    fn same_partition(a: &[u32], b: &[usize]) -> bool {
        a.iter()
            .zip(b)
            .all(|(&x, &y)| a.iter().zip(b).all(|(&x2, &y2)| (x == x2) == (y == y2)))
    }

    #[test]
    fn zero_threshold_is_identity() {
        let m = strip(&[10.0, 10.0, 30.0]);
        assert_eq!(merge_similar(&m, 0.0, 10.0), m);
    }

    #[test]
    fn identical_neighbours_merge() {
        let m = merge_similar(&strip(&[40.0, 40.0]), 0.5, 10.0);
        assert_eq!(m.len(), 1);
        assert_eq!(m.superpixels()[0].size, 2);
    }

    #[test]
    fn chain_merges_first_pair_only() {
        let ls = [50.0, 52.0, 61.0];
        let m = merge_similar(&strip(&ls), 5.0, 10.0);
        assert_eq!(m.labels(), &[0, 0, 1]);
        assert!(same_partition(m.labels(), &oracle(&ls, 5.0)));
        assert!((m.superpixels()[0].mean_lab.l - 51.0).abs() < 1e-12);
    }

    #[test]
    fn height_term_blocks_merge() {
        let labels = [0u32, 1];
        let colors = [lab(50.0), lab(50.0)];
        let heights = HeightRaster::new(2, 1, vec![0.0, 2.0], -9999.0).unwrap();
        let m = SuperpixelMap::from_labels(2, 1, &labels, &colors, Some(&heights)).unwrap();
        assert_eq!(merge_similar(&m, 8.0, 10.0).len(), 2);
        assert_eq!(merge_similar(&m, 8.0, 1.0).len(), 1);
    }

    #[test]
    fn random_strips_match_oracle() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 10.0
        };
        for _ in 0..50 {
            let ls: Vec<f64> = (0..12).map(|_| next()).collect();
            for threshold in [3.0, 10.0, 25.0] {
                let m = merge_similar(&strip(&ls), threshold, 10.0);
                assert!(
                    same_partition(m.labels(), &oracle(&ls, threshold)),
                    "{ls:?} @ {threshold}"
                );
            }
        }
    }

    #[test]
    fn invariants_on_grid() {
        let w = 6;
        let labels: Vec<u32> = (0..36).map(|i| ((i % w) / 2 + 3 * ((i / w) / 2)) as u32).collect();
        let colors: Vec<LabPixel> = (0..36).map(|i| lab(((i % w) / 2 * 5) as f64)).collect();
        let m = SuperpixelMap::from_labels(6, 6, &labels, &colors, None).unwrap();
        let merged = merge_similar(&m, 6.0, 10.0);
        assert!(merged.len() <= m.len());
        assert!(is_partition(&merged) && all_connected(&merged) && adjacency_ok(&merged));
        let again = merge_similar(&merged, 6.0, 10.0);
        assert_eq!(again.labels(), merged.labels());
    }
}
