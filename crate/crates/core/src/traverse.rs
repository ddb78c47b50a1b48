//! Scan-line voxels: incremental face-stepping traversal of a ray through a grid.

use crate::camera::Ray;
use crate::grid::{GridMeta, VoxelIndex};

/// Minimum segment length (meters) for the ray to count as inside the grid.
pub const GRAZE_TOLERANCE: f64 = 1e-9;

/// One traversed voxel with the ray parameters (meters) where the ray enters
/// and leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalStep {
    pub voxel: VoxelIndex,
    pub entry: f64,
    pub exit: f64,
}

/// Default traversal range: the grid's space diagonal.
pub fn default_max_range(meta: &GridMeta) -> f64 {
    meta.diagonal()
}

/// Voxels crossed by the segment `[origin, origin + max_range * dir]`, near to far.
pub fn traverse_grid(ray: &Ray, meta: &GridMeta, max_range: f64) -> Vec<VoxelIndex> {
    traverse_steps(ray, meta, max_range)
        .into_iter()
        .map(|s| s.voxel)
        .collect()
}

/// Same as [`traverse_grid`] but keeps entry/exit distances.
pub fn traverse_steps(ray: &Ray, meta: &GridMeta, max_range: f64) -> Vec<TraversalStep> {
    Traversal::new(ray, meta, max_range).collect()
}

/// Lazy face-stepping walk along a ray; yields voxels near to far.
#[derive(Debug, Clone)]
pub struct Traversal {
    /// Index-space origin and direction; `t` is in voxel units.
    origin: [f64; 3],
    dir: [f64; 3],
    size: f64,
    dims: [i64; 3],
    cell: [i64; 3],
    step: [i64; 3],
    t_next: [f64; 3],
    entry: f64,
    t_end: f64,
    tol: f64,
    done: bool,
}

impl Traversal {
    pub fn new(ray: &Ray, meta: &GridMeta, max_range: f64) -> Self {
        let size = f64::from(meta.voxel_size());
        let o = (ray.origin - meta.world_min()) / size;
        let d = ray.dir;
        let dims = meta.dims().map(i64::from);
        let mut walk = Self {
            origin: [o.x, o.y, o.z],
            dir: [d.x, d.y, d.z],
            size,
            dims,
            cell: [0; 3],
            step: [0; 3],
            t_next: [f64::INFINITY; 3],
            entry: 0.0,
            t_end: max_range / size,
            tol: GRAZE_TOLERANCE / size,
            done: true,
        };
        if max_range.is_nan() || max_range <= 0.0 {
            return walk;
        }

        let mut t0 = 0.0f64;
        let mut t1 = walk.t_end;
        for axis in 0..3 {
            let extent = dims[axis] as f64;
            if d[axis] == 0.0 {
                if o[axis] < 0.0 || o[axis] > extent {
                    return walk;
                }
                continue;
            }
            let ta = -o[axis] / d[axis];
            let tb = (extent - o[axis]) / d[axis];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if t1 - t0 <= walk.tol {
            return walk;
        }

        for axis in 0..3 {
            let p = o[axis] + d[axis] * t0;
            let c = if d[axis] < 0.0 {
                walk.step[axis] = -1;
                p.ceil() - 1.0
            } else {
                if d[axis] > 0.0 {
                    walk.step[axis] = 1;
                }
                p.floor()
            };
            walk.cell[axis] = (c as i64).clamp(0, dims[axis] - 1);
        }
        for axis in 0..3 {
            walk.t_next[axis] = walk.next_boundary(axis);
        }
        walk.entry = t0;
        walk.t_end = t1;
        walk.done = false;
        walk
    }

    /// Ray parameter where the walk leaves the current cell through `axis`.
    fn next_boundary(&self, axis: usize) -> f64 {
        let face = match self.step[axis] {
            0 => return f64::INFINITY,
            1 => self.cell[axis] + 1,
            _ => self.cell[axis],
        };
        (face as f64 - self.origin[axis]) / self.dir[axis]
    }
}

impl Iterator for Traversal {
    type Item = TraversalStep;

    fn next(&mut self) -> Option<TraversalStep> {
        if self.done {
            return None;
        }
        let axis = (0..3)
            .min_by(|&a, &b| self.t_next[a].total_cmp(&self.t_next[b]))
            .unwrap();
        let exit = self.t_next[axis].min(self.t_end).max(self.entry);
        let item = TraversalStep {
            voxel: self.cell.map(|c| c as usize),
            entry: self.entry * self.size,
            exit: exit * self.size,
        };
        if exit >= self.t_end - self.tol {
            self.done = true;
        } else {
            self.cell[axis] += self.step[axis];
            if self.cell[axis] < 0 || self.cell[axis] >= self.dims[axis] {
                self.done = true;
            } else {
                self.entry = exit;
                self.t_next[axis] = self.next_boundary(axis);
            }
        }
        Some(item)
    }
}
