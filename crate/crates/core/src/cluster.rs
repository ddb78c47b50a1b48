//! Density clustering of predicted instance centers.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AffinityField, VoxelIndex};

/// Label of points that belong to no cluster.
pub const NOISE: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Neighborhood radius in voxel-index units.
    pub eps: f64,
    /// Neighborhood size (self included) that makes a point core.
    pub min_pts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps: 1.5,
            min_pts: 4,
        }
    }
}

impl ClusterParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        let params = Self { eps, min_pts };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive and finite, got {}",
                self.eps
            )));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Instance center implied by each voxel's affinity: position minus affinity.
pub fn predicted_centers(
    positions: &[VoxelIndex],
    affinity: &AffinityField,
) -> Result<Vec<[f64; 3]>> {
    let meta = affinity.meta();
    positions
        .iter()
        .map(|&p| {
            if !meta.contains(p) {
                return Err(Error::OutOfRange(format!(
                    "voxel {p:?} outside affinity grid {:?}",
                    meta.dims()
                )));
            }
            let a = affinity.get(p);
            Ok([0, 1, 2].map(|axis| p[axis] as f64 - f64::from(a[axis])))
        })
        .collect()
}

/// Uniform bucket index with cell edge `eps`; a radius query only needs the
/// 27 surrounding buckets.
struct BucketIndex<'a> {
    points: &'a [[f64; 3]],
    eps: f64,
    eps_sq: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> BucketIndex<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self {
            points,
            eps,
            eps_sq: eps * eps,
            buckets,
        }
    }

    fn key(p: &[f64; 3], eps: f64) -> [i64; 3] {
        p.map(|c| (c / eps).floor() as i64)
    }

    /// Indices within `eps` of point `i` (self included), in a fixed order.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let k = Self::key(p, self.eps);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(bucket) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        if dist_sq(p, &self.points[j]) <= self.eps_sq {
                            out.push(j);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// DBSCAN with deterministic numbering: points are visited in input order and
/// clusters are numbered 1..K in discovery order. A border point reachable
/// from several clusters joins the first one that reaches it. Returns one
/// label per point, [`NOISE`] for outliers.
pub fn dbscan(points: &[[f64; 3]], params: &ClusterParams) -> Vec<u32> {
    const UNVISITED: u32 = u32::MAX;
    let mut labels = vec![UNVISITED; points.len()];
    if points.is_empty() {
        return labels;
    }
    let index = BucketIndex::new(points, params.eps);
    let mut next_id = 0u32;
    let mut neighbors = Vec::new();
    let mut frontier = VecDeque::new();

    for seed in 0..points.len() {
        if labels[seed] != UNVISITED {
            continue;
        }
        index.neighbors(seed, &mut neighbors);
        if neighbors.len() < params.min_pts {
            labels[seed] = NOISE;
            continue;
        }
        next_id += 1;
        labels[seed] = next_id;
        frontier.extend(neighbors.iter().copied());
        while let Some(q) = frontier.pop_front() {
            match labels[q] {
                NOISE => {
                    // border point previously written off as noise
                    labels[q] = next_id;
                    continue;
                }
                UNVISITED => labels[q] = next_id,
                _ => continue,
            }
            index.neighbors(q, &mut neighbors);
            if neighbors.len() >= params.min_pts {
                frontier.extend(neighbors.iter().copied());
            }
        }
    }
    labels
}
