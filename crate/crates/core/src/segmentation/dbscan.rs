use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighbourhood radius in meters.
    pub epsilon: f64,
    /// Minimum neighbourhood size (the point itself included) for a core point.
    pub min_pts: usize,
    /// Scale applied to the height coordinate before measuring distance.
    pub lambda_h: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            epsilon: 1.5,
            min_pts: 2,
            lambda_h: 10.0,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config("dbscan.epsilon must be >= 0".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("dbscan.min_pts must be >= 1".into()));
        }
        if !(self.lambda_h >= 0.0) {
            return Err(Error::Config("seg.lambda_h must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id per input item, `None` for noise.
    pub cluster_of: Vec<Option<u32>>,
    pub params: DbscanParams,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn is_noise(&self, item: usize) -> bool {
        self.cluster_of[item].is_none()
    }

    /// Items grouped by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, c) in self.cluster_of.iter().enumerate() {
            if let Some(c) = c {
                out[*c as usize].push(i);
            }
        }
        out
    }
}

/// Density-based clustering of `(x, y, h)` items (meters) under the distance
/// `|(dx, dy, lambda_h * dh)|`.
///
/// Items are visited in input order; cluster ids follow discovery order and a
/// border item belongs to the first cluster that reaches it.
pub fn dbscan(items: &[[f64; 3]], params: &DbscanParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let eps_sq = params.epsilon * params.epsilon;
    let scaled: Vec<[f64; 3]> = items.iter().map(|&[x, y, h]| [x, y, params.lambda_h * h]).collect();
    let neighbours = |i: usize| -> Vec<usize> {
        let p = scaled[i];
        scaled
            .iter()
            .enumerate()
            .filter(|(_, q)| {
                let (dx, dy, dh) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
                dx * dx + dy * dy + dh * dh <= eps_sq
            })
            .map(|(j, _)| j)
            .collect()
    };

    let n = items.len();
    let mut cluster_of: Vec<Option<u32>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_id = 0u32;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let seeds = neighbours(start);
        if seeds.len() < params.min_pts {
            // may still be claimed as a border point later
            continue;
        }
        visited[start] = true;
        let id = next_id;
        next_id += 1;
        cluster_of[start] = Some(id);
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if cluster_of[j].is_none() {
                cluster_of[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = neighbours(j);
            if nb.len() >= params.min_pts {
                queue.extend(nb.into_iter().filter(|&k| !visited[k]));
            }
        }
    }
    Ok(ClusterAssignment {
        cluster_of,
        params: *params,
        n_clusters: next_id as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(epsilon: f64, min_pts: usize) -> DbscanParams {
        DbscanParams {
            epsilon,
            min_pts,
            lambda_h: 10.0,
        }
    }

    #[test]
    fn two_close_one_far() {
        let pts = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [10.0, 10.0, 0.0]];
        let a = dbscan(&pts, &params(2.0, 2)).unwrap();
        assert_eq!(a.cluster_of, vec![Some(0), Some(0), None]);
        assert_eq!(a.n_clusters, 1);
    }

    #[test]
    fn coincident_points() {
        let pts = [[3.0, 4.0, 1.0]; 6];
        let a = dbscan(&pts, &params(0.0, 6)).unwrap();
        assert!(a.cluster_of.iter().all(|&c| c == Some(0)));
    }

    #[test]
    fn isolated_cores() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let a = dbscan(&pts, &params(0.0, 1)).unwrap();
        assert_eq!(a.cluster_of, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn height_is_scaled() {
        // 0.5 m apart vertically is 5 m after scaling
        let pts = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.5]];
        assert_eq!(dbscan(&pts, &params(1.5, 2)).unwrap().n_clusters, 0);
    }

    #[test]
    fn border_goes_to_first_cluster() {
        // two dense groups of five with one item 0.8 from each
        let mut pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64 * 0.05, 0.0, 0.0]).collect();
        pts.push([1.0, 0.0, 0.0]);
        pts.extend((0..5).map(|i| [1.8 + i as f64 * 0.05, 0.0, 0.0]));
        let a = dbscan(&pts, &params(0.82, 4)).unwrap();
        let mut expected = vec![Some(0); 6];
        expected.extend([Some(1); 5]);
        assert_eq!(a.cluster_of, expected);
    }

    #[test]
    fn rejects_zero_min_pts() {
        assert!(dbscan(&[], &params(1.0, 0)).is_err());
    }
}
