//! Reference implementations used as test oracles, plus scenario builders.
//!
//! Everything here is deliberately naive: quadratic scans, fixed-step ray
//! sampling, textbook DBSCAN. None of it shares code paths with the
//! implementations it checks beyond the plain data types.

use std::collections::HashMap;

use nalgebra::Vector3;
use og_core::camera::{PinholeCamera, Ray};
use og_core::grid::{GridMeta, SemanticGrid, VoxelIndex};
use og_core::grounding::Mask2D;
use og_core::synth::{default_class_table, render_view, PlacedBox, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Renumbers labels by first appearance (0 stays 0), so two partitions are
/// equal up to renaming iff their canonical forms are equal.
pub fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                let next = map.len() as u32 + 1;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Same-class components by flood fill where each expansion scans every voxel
/// of the grid and tests adjacency directly: two voxels touch when no index
/// differs by more than one and at most `max_nonzero` indices differ
/// (1 = faces, 2 = plus edges, 3 = plus corners).
pub fn brute_force_components(grid: &SemanticGrid, connectivity: u32) -> Vec<u32> {
    let max_nonzero = match connectivity {
        6 => 1,
        18 => 2,
        26 => 3,
        other => panic!("unsupported connectivity {other}"),
    };
    let meta = grid.meta();
    let n = meta.cell_count();
    let coords: Vec<VoxelIndex> = (0..n).map(|l| meta.unflatten(l)).collect();
    let touches = |a: VoxelIndex, b: VoxelIndex| {
        let diffs: Vec<usize> = (0..3).map(|x| a[x].abs_diff(b[x])).collect();
        let nonzero = diffs.iter().filter(|&&d| d != 0).count();
        diffs.iter().all(|&d| d <= 1) && nonzero >= 1 && nonzero <= max_nonzero
    };
    let labels = grid.labels();
    let mut ids = vec![0u32; n];
    let mut next = 0;
    for seed in 0..n {
        if labels[seed] == 0 || ids[seed] != 0 {
            continue;
        }
        next += 1;
        ids[seed] = next;
        let mut queue = vec![seed];
        while let Some(cur) = queue.pop() {
            for other in 0..n {
                if ids[other] == 0
                    && labels[other] == labels[cur]
                    && touches(coords[cur], coords[other])
                {
                    ids[other] = next;
                    queue.push(other);
                }
            }
        }
    }
    ids
}

/// DBSCAN as originally published: full distance scans, a seed set per
/// cluster, noise relabeled when later reached. Returns 0 for noise.
pub fn textbook_dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Vec<u32> {
    const UNCLASSIFIED: i64 = -1;
    const NOISE: i64 = 0;
    let region = |i: usize| -> Vec<usize> {
        (0..points.len())
            .filter(|&j| {
                let d2: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
                d2 <= eps * eps
            })
            .collect()
    };
    let mut cluster = vec![UNCLASSIFIED; points.len()];
    let mut cluster_id = 0i64;
    for p in 0..points.len() {
        if cluster[p] != UNCLASSIFIED {
            continue;
        }
        let seeds = region(p);
        if seeds.len() < min_pts {
            cluster[p] = NOISE;
            continue;
        }
        cluster_id += 1;
        for &s in &seeds {
            if cluster[s] == UNCLASSIFIED || cluster[s] == NOISE {
                cluster[s] = cluster_id;
            }
        }
        let mut queue: Vec<usize> = seeds.into_iter().filter(|&s| s != p).collect();
        let mut head = 0;
        while head < queue.len() {
            let current = queue[head];
            head += 1;
            let result = region(current);
            if result.len() >= min_pts {
                for r in result {
                    if cluster[r] == UNCLASSIFIED {
                        queue.push(r);
                        cluster[r] = cluster_id;
                    } else if cluster[r] == NOISE {
                        cluster[r] = cluster_id;
                    }
                }
            }
        }
    }
    cluster.into_iter().map(|c| c.max(0) as u32).collect()
}

/// Fine-sampling traversal oracle: samples the segment every `voxel_size / 100`
/// (plus the exact endpoint), maps each sample with `world_to_voxel`, and
/// collapses consecutive repeats.
pub fn sampled_traversal(ray: &Ray, meta: &GridMeta, max_range: f64) -> Vec<VoxelIndex> {
    let h = f64::from(meta.voxel_size()) / 100.0;
    let steps = (max_range / h).floor() as usize;
    let mut out: Vec<VoxelIndex> = Vec::new();
    let ts = (0..=steps)
        .map(|k| k as f64 * h)
        .chain(std::iter::once(max_range));
    for t in ts {
        if let Some(v) = meta.world_to_voxel(&ray.at(t)) {
            if out.last() != Some(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// True when some voxel the segment crosses is crossed for less than `min_len`
/// meters: consecutive events among all grid-plane crossings, grid entry/exit
/// and segment ends come closer than `min_len`. Such rays graze an edge or
/// corner and the sampling oracle cannot resolve them.
pub fn grazes(ray: &Ray, meta: &GridMeta, max_range: f64, min_len: f64) -> bool {
    let size = f64::from(meta.voxel_size());
    let lo = meta.world_min();
    let dims = meta.dims();
    let mut events = vec![0.0, max_range];
    for axis in 0..3 {
        let d = ray.dir[axis];
        if d.abs() < 1e-12 {
            // running parallel to a plane family: reject if close to a plane
            let rel = (ray.origin[axis] - lo[axis]) / size;
            if (rel - rel.round()).abs() * size < min_len {
                return true;
            }
            continue;
        }
        for plane in 0..=dims[axis] {
            let x = lo[axis] + f64::from(plane) * size;
            let t = (x - ray.origin[axis]) / d;
            if t > 0.0 && t < max_range {
                events.push(t);
            }
        }
    }
    events.sort_by(f64::total_cmp);
    // only short gaps near the grid matter
    events.windows(2).any(|w| {
        let mid = ray.at(0.5 * (w[0] + w[1]));
        w[1] - w[0] < min_len && inside_closed(meta, &mid, min_len)
    })
}

fn inside_closed(meta: &GridMeta, p: &Vector3<f64>, slack: f64) -> bool {
    let (lo, hi) = (meta.world_min(), meta.world_max());
    (0..3).all(|a| p[a] >= lo[a] - slack && p[a] <= hi[a] + slack)
}

/// Grid of 1 to 11 voxels per axis with random voxel size and origin.
pub fn random_meta(rng: &mut impl Rng) -> GridMeta {
    let dims = [
        rng.gen_range(1..12),
        rng.gen_range(1..12),
        rng.gen_range(1..12),
    ];
    let size = rng.gen_range(0.05f32..0.5);
    let origin = [
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(-1.0f32..1.0),
    ];
    GridMeta::new(dims, size, origin).unwrap()
}

/// A ray from somewhere in or around the grid, nudged by tiny random
/// offsets until it crosses no voxel for less than three oracle steps.
/// The flag reports whether any nudge was needed.
pub fn non_grazing_ray(rng: &mut impl Rng, meta: &GridMeta, range: f64) -> (Ray, bool) {
    let (lo, hi) = (meta.world_min(), meta.world_max());
    let span = hi - lo;
    let origin = Vector3::from_fn(|a, _| lo[a] + rng.gen_range(-0.5..1.5) * span[a]);
    // half the rays aim at a point inside the grid, the rest go anywhere
    let target = Vector3::from_fn(|a, _| lo[a] + rng.gen_range(0.0..1.0) * span[a]);
    let dir = match (target - origin).try_normalize(1e-9) {
        Some(d) if rng.gen_bool(0.5) => d,
        _ => random_direction(rng),
    };
    let mut ray = Ray { origin, dir };
    let size = f64::from(meta.voxel_size());
    let min_len = 3.0 * size / 100.0;
    let mut nudged = false;
    while grazes(&ray, meta, range, min_len) {
        nudged = true;
        let eps = size * 1e-2;
        ray.origin += Vector3::from_fn(|_, _| rng.gen_range(-eps..eps));
        ray.dir = (ray.dir + Vector3::from_fn(|_, _| rng.gen_range(-1e-3..1e-3))).normalize();
    }
    (ray, nudged)
}

/// Up to 200 points: blobs around a few centers plus uniform clutter, on a
/// half-unit lattice so that many pairs sit exactly at the radius.
pub fn random_point_set(rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let n = rng.gen_range(1..=200);
    let blobs: Vec<[f64; 3]> = (0..rng.gen_range(1..6))
        .map(|_| std::array::from_fn(|_| rng.gen_range(0..40) as f64 * 0.5))
        .collect();
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.8) {
                let c = blobs[rng.gen_range(0..blobs.len())];
                std::array::from_fn(|a| c[a] + rng.gen_range(-4..=4) as f64 * 0.5)
            } else {
                std::array::from_fn(|_| rng.gen_range(0..40) as f64 * 0.5)
            }
        })
        .collect()
}

/// Grid up to 8x8x8 with random fill density and one to three classes.
pub fn random_label_grid(rng: &mut impl Rng) -> SemanticGrid {
    let dims = [
        rng.gen_range(1..=8),
        rng.gen_range(1..=8),
        rng.gen_range(1..=8),
    ];
    let meta = GridMeta::new(dims, 0.1, [0.0; 3]).unwrap();
    let fill = rng.gen_range(0.1..0.7);
    let classes = rng.gen_range(1..4u8);
    let labels = (0..meta.cell_count())
        .map(|_| {
            if rng.gen_bool(fill) {
                rng.gen_range(1..=classes)
            } else {
                0
            }
        })
        .collect();
    SemanticGrid::new(meta, labels, default_class_table()).unwrap()
}

/// Random unit vector from three uniform draws, normalized.
pub fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A scene with two boxes stacked along the camera's line of sight.
pub struct OcclusionCase {
    pub scene: Scene,
    pub near: PlacedBox,
    pub far: PlacedBox,
}

fn box_labels(meta: &GridMeta, boxes: &[PlacedBox]) -> Vec<u8> {
    let mut labels = vec![0u8; meta.cell_count()];
    for b in boxes {
        for k in b.min[2]..b.min[2] + b.size[2] {
            for j in b.min[1]..b.min[1] + b.size[1] {
                for i in b.min[0]..b.min[0] + b.size[0] {
                    labels[meta.linear_index([i as usize, j as usize, k as usize])] = b.class;
                }
            }
        }
    }
    labels
}

/// Builds the `seed`-th two-box occlusion scene: a camera on the floor-level
/// side of a 48x32x24 room looks down +x; a near box partly hides a far box
/// placed further along the same sight line, with random sizes, gap and
/// lateral offset.
pub fn occlusion_case(seed: u64) -> OcclusionCase {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0cc1_u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let meta = GridMeta::new([48, 32, 24], 0.08, [0.0; 3]).unwrap();
    let table = default_class_table();
    let pool: Vec<u8> = ["chair", "sofa", "table", "bed", "tvs"]
        .iter()
        .map(|n| table.id_of(n).unwrap())
        .collect();
    let pick = |rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())];

    let near_size = [
        rng.gen_range(3..6),
        rng.gen_range(3..7),
        rng.gen_range(3..7),
    ];
    let far_size = [
        rng.gen_range(3..7),
        rng.gen_range(4..9),
        rng.gen_range(4..9),
    ];
    let near_x = rng.gen_range(8..16u32);
    let gap = rng.gen_range(2..10u32);
    let far_x = near_x + near_size[0] + gap;
    let centered = |size: u32, dim: u32, jitter: i32| -> u32 {
        ((dim as i32 - size as i32) / 2 + jitter) as u32
    };
    let near = PlacedBox {
        min: [
            near_x,
            centered(near_size[1], 32, rng.gen_range(-1..=1)),
            centered(near_size[2], 24, rng.gen_range(-1..=1)),
        ],
        size: near_size,
        class: pick(&mut rng),
    };
    let far = PlacedBox {
        min: [
            far_x,
            centered(far_size[1], 32, rng.gen_range(-2..=2)),
            centered(far_size[2], 24, rng.gen_range(-2..=2)),
        ],
        size: far_size,
        class: pick(&mut rng),
    };
    let labels = box_labels(&meta, &[near, far]);
    let sem = SemanticGrid::new(meta, labels, table).unwrap();
    let size = f64::from(meta.voxel_size());
    let eye = Vector3::new(
        0.5,
        16.0 + rng.gen_range(-0.3..0.3),
        12.0 + rng.gen_range(-0.3..0.3),
    ) * size;
    let target = Vector3::new(40.0, 16.0, 12.0) * size;
    let camera = PinholeCamera::look_at(
        120.0,
        120.0,
        80.0,
        60.0,
        160,
        120,
        eye,
        target,
        Vector3::z(),
    )
    .unwrap();
    let mut scene = Scene::from_grid(sem, camera);
    scene.boxes = vec![near, far];
    OcclusionCase { scene, near, far }
}

impl OcclusionCase {
    /// Pixels covered by both boxes when each is rendered alone: the pixels
    /// whose rays pass through the near box and then the far one.
    pub fn shared_mask(&self) -> Mask2D {
        let alone = |b: &PlacedBox| {
            let meta = *self.scene.sem.meta();
            let sem = SemanticGrid::new(
                meta,
                box_labels(&meta, &[*b]),
                self.scene.sem.class_table().clone(),
            )
            .unwrap();
            render_view(&Scene::from_grid(sem, self.scene.camera.clone()))
        };
        let (near, far) = (alone(&self.near), alone(&self.far));
        let flags = near
            .class
            .iter()
            .zip(&far.class)
            .map(|(&a, &b)| a != 0 && b != 0)
            .collect();
        Mask2D::new(near.width, near.height, flags).unwrap()
    }

    pub fn voxels(b: &PlacedBox) -> Vec<VoxelIndex> {
        let mut out = Vec::new();
        for k in b.min[2]..b.min[2] + b.size[2] {
            for j in b.min[1]..b.min[1] + b.size[1] {
                for i in b.min[0]..b.min[0] + b.size[0] {
                    out.push([i as usize, j as usize, k as usize]);
                }
            }
        }
        out
    }
}
