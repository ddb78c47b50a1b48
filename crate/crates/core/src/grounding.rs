//! Lifting a 2D instance mask to a 3D voxel instance, and mask-free instance
//! segmentation of a whole grid from an affinity field.
//!
//! Grounding pipeline: every masked pixel casts a ray through the grid; the
//! crossed voxels become candidates; candidates that are empty or carry a
//! background class are dropped; the rest are clustered on their predicted
//! centers and the cluster closest to the camera wins.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::cluster::{dbscan, predicted_centers, ClusterParams, NOISE};
use crate::error::{Error, Result};
use crate::grid::{AffinityField, ClassTable, GridMeta, InstanceMap, SemanticGrid, VoxelIndex};
use crate::traverse::traverse_grid;

/// Classes that the background filter removes by default.
pub const DEFAULT_BACKGROUND: [&str; 3] = ["ceiling", "floor", "wall"];

/// Binary image mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    width: u32,
    height: u32,
    flags: Vec<bool>,
}

impl Mask2D {
    pub fn new(width: u32, height: u32, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "mask of {width}x{height} needs {} flags, got {}",
                width as usize * height as usize,
                flags.len()
            )));
        }
        Ok(Self {
            width,
            height,
            flags,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            flags: vec![false; width as usize * height as usize],
        }
    }

    /// Mask with exactly the listed `(col, row)` pixels set.
    pub fn from_pixels(width: u32, height: u32, pixels: &[[u32; 2]]) -> Result<Self> {
        let mut mask = Self::empty(width, height);
        for &[u, v] in pixels {
            if u >= width || v >= height {
                return Err(Error::OutOfRange(format!(
                    "pixel ({u}, {v}) outside {width}x{height} mask"
                )));
            }
            mask.flags[v as usize * width as usize + u as usize] = true;
        }
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        self.flags[row as usize * self.width as usize + col as usize]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Set pixels as `(col, row)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.flags
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Binary PGM (P5, maxval 255, 255 = set).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.flags.iter().map(|&f| if f { 255u8 } else { 0 }));
        out
    }

    /// Parses a binary PGM; any nonzero sample counts as set.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::format("pgm", reason.to_owned());
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("header ends early"));
            }
            fields.push(
                std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?,
            );
        }
        if fields[0] != "P5" {
            return Err(bad("expected P5 magic"));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit PGM masks are supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = width as usize * height as usize;
        let raster = bytes
            .get(pos..)
            .filter(|r| r.len() == n)
            .ok_or_else(|| bad("raster size does not match header"))?;
        Self::new(width, height, raster.iter().map(|&b| b != 0).collect())
    }
}

/// Class ids that can never be grounded. Empty (id 0) is always background.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BackgroundList {
    ids: BTreeSet<u8>,
}

impl BackgroundList {
    pub fn from_ids(ids: impl IntoIterator<Item = u8>, table: &ClassTable) -> Result<Self> {
        let ids: BTreeSet<u8> = ids.into_iter().collect();
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= table.len()) {
            return Err(Error::InvalidParameter(format!(
                "background class id {bad} outside class table"
            )));
        }
        Ok(Self { ids })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], table: &ClassTable) -> Result<Self> {
        let ids = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                table
                    .id_of(n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown class {n:?}")))
            })
            .collect::<Result<BTreeSet<u8>>>()?;
        Ok(Self { ids })
    }

    /// The default list, keeping only the names that the table defines.
    pub fn default_for(table: &ClassTable) -> Self {
        Self {
            ids: DEFAULT_BACKGROUND
                .iter()
                .filter_map(|n| table.id_of(n))
                .collect(),
        }
    }

    pub fn contains(&self, class: u8) -> bool {
        class == 0 || self.ids.contains(&class)
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.ids.iter().copied()
    }
}

/// Farthest distance from `from` to any grid corner; rays cast from `from`
/// need no more range than this to cover the grid.
pub fn scene_range(meta: &GridMeta, from: &Vector3<f64>) -> f64 {
    let (lo, hi) = (meta.world_min(), meta.world_max());
    let mut best = 0f64;
    for corner in 0..8 {
        let c = Vector3::new(
            if corner & 1 == 0 { lo.x } else { hi.x },
            if corner & 2 == 0 { lo.y } else { hi.y },
            if corner & 4 == 0 { lo.z } else { hi.z },
        );
        best = best.max((c - from).norm());
    }
    best
}

/// Union of the scan-line voxels of every masked pixel, deduplicated in
/// first-encounter order (pixels row-major, each scan line near to far).
pub fn candidate_voxels(
    mask: &Mask2D,
    cam: &PinholeCamera,
    meta: &GridMeta,
) -> Result<Vec<VoxelIndex>> {
    if mask.width() != cam.width() || mask.height() != cam.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}, camera image is {}x{}",
            mask.width(),
            mask.height(),
            cam.width(),
            cam.height()
        )));
    }
    let range = scene_range(meta, &cam.position());
    let pixels: Vec<(u32, u32)> = mask.pixels().collect();
    let lines = pixels
        .par_iter()
        .map(|&(u, v)| Ok(traverse_grid(&cam.pixel_center_ray(u, v)?, meta, range)))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = vec![false; meta.cell_count()];
    let mut out = Vec::new();
    for voxel in lines.into_iter().flatten() {
        let lin = meta.linear_index(voxel);
        if !seen[lin] {
            seen[lin] = true;
            out.push(voxel);
        }
    }
    Ok(out)
}

/// A candidate voxel that survived background filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foreground {
    pub voxel: VoxelIndex,
    pub class: u8,
    /// Position minus affinity, voxel-index units.
    pub center: [f64; 3],
}

pub fn filter_foreground(
    candidates: &[VoxelIndex],
    sem: &SemanticGrid,
    affinity: &AffinityField,
    bg: &BackgroundList,
) -> Result<Vec<Foreground>> {
    sem.meta()
        .ensure_same(affinity.meta(), "semantic grid vs affinity")?;
    let kept: Vec<(VoxelIndex, u8)> = candidates
        .iter()
        .map(|&v| {
            if !sem.meta().contains(v) {
                return Err(Error::OutOfRange(format!("candidate {v:?} outside grid")));
            }
            Ok((v, sem.label(v)))
        })
        .filter(|r| !matches!(r, Ok((_, class)) if bg.contains(*class)))
        .collect::<Result<_>>()?;
    let positions: Vec<VoxelIndex> = kept.iter().map(|&(v, _)| v).collect();
    let centers = predicted_centers(&positions, affinity)?;
    Ok(kept
        .into_iter()
        .zip(centers)
        .map(|((voxel, class), center)| Foreground {
            voxel,
            class,
            center,
        })
        .collect())
}

/// One clustered group of foreground voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedCluster {
    /// Members in candidate order.
    pub voxels: Vec<VoxelIndex>,
    /// Mean predicted center, voxel-index units.
    pub center: [f64; 3],
    pub class: u8,
    /// Distance (meters) from the camera to the nearest member voxel center.
    pub depth: f64,
    pub mean_depth: f64,
    /// Smallest member linear index.
    pub first_linear: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingResult {
    pub selected: Option<GroundedCluster>,
    /// All clusters in discovery order.
    pub clusters: Vec<GroundedCluster>,
    pub noise_count: usize,
    pub candidate_count: usize,
    pub foreground_count: usize,
    pub params: ClusterParams,
}

impl GroundingResult {
    /// Candidates existed but every one was empty or background.
    pub fn is_no_foreground(&self) -> bool {
        self.candidate_count > 0 && self.foreground_count == 0
    }

    pub fn report(&self, table: &ClassTable) -> GroundingReport {
        let cluster = |c: &GroundedCluster| ClusterReport {
            voxels: c.voxels.clone(),
            center: c.center,
            class: table.name(c.class).unwrap_or("unknown").to_owned(),
            depth: c.depth,
        };
        GroundingReport {
            selected: self.selected.as_ref().map(cluster),
            clusters: self.clusters.iter().map(cluster).collect(),
            noise_count: self.noise_count,
            params: self.params,
        }
    }
}

/// Wire/file form of a [`GroundedCluster`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub voxels: Vec<VoxelIndex>,
    pub center: [f64; 3],
    pub class: String,
    pub depth: f64,
}

/// Wire/file form of a [`GroundingResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub selected: Option<ClusterReport>,
    pub clusters: Vec<ClusterReport>,
    pub noise_count: usize,
    pub params: ClusterParams,
}

impl GroundingReport {
    /// Canonical serialization shared by the CLI and the service.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report is always serializable");
        s.push('\n');
        s
    }
}

fn majority_class(classes: impl Iterator<Item = u8>) -> u8 {
    let mut counts = [0u32; 256];
    for c in classes {
        counts[c as usize] += 1;
    }
    majority_of_counts(&counts)
}

/// Most frequent class; ties resolve to the smaller id.
fn majority_of_counts(counts: &[u32; 256]) -> u8 {
    let mut best = 0usize;
    for (class, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = class;
        }
    }
    best as u8
}

/// Grounds a 2D mask to the nearest 3D cluster along its pixel rays.
pub fn ground_mask(
    mask: &Mask2D,
    cam: &PinholeCamera,
    sem: &SemanticGrid,
    affinity: &AffinityField,
    bg: &BackgroundList,
    params: &ClusterParams,
) -> Result<GroundingResult> {
    params.validate()?;
    let meta = sem.meta();
    meta.ensure_same(affinity.meta(), "semantic grid vs affinity")?;
    let candidates = candidate_voxels(mask, cam, meta)?;
    let fg = filter_foreground(&candidates, sem, affinity, bg)?;
    let centers: Vec<[f64; 3]> = fg.iter().map(|f| f.center).collect();
    let labels = dbscan(&centers, params);

    let cluster_count = labels.iter().copied().max().unwrap_or(NOISE) as usize;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cluster_count];
    let mut noise_count = 0;
    for (i, &label) in labels.iter().enumerate() {
        if label == NOISE {
            noise_count += 1;
        } else {
            members[label as usize - 1].push(i);
        }
    }

    let eye = cam.position();
    let clusters: Vec<GroundedCluster> = members
        .iter()
        .map(|idx| {
            let n = idx.len() as f64;
            let mut center = [0f64; 3];
            let mut depth = f64::INFINITY;
            let mut depth_sum = 0f64;
            let mut first_linear = usize::MAX;
            for &i in idx {
                let f = &fg[i];
                for (c, x) in center.iter_mut().zip(f.center) {
                    *c += x;
                }
                let d = (meta.voxel_center(f.voxel) - eye).norm();
                depth = depth.min(d);
                depth_sum += d;
                first_linear = first_linear.min(meta.linear_index(f.voxel));
            }
            GroundedCluster {
                voxels: idx.iter().map(|&i| fg[i].voxel).collect(),
                center: center.map(|c| c / n),
                class: majority_class(idx.iter().map(|&i| fg[i].class)),
                depth,
                mean_depth: depth_sum / n,
                first_linear,
            }
        })
        .collect();

    let selected = clusters
        .iter()
        .min_by(|a, b| {
            a.depth
                .total_cmp(&b.depth)
                .then(a.mean_depth.total_cmp(&b.mean_depth))
                .then(a.first_linear.cmp(&b.first_linear))
        })
        .cloned();

    Ok(GroundingResult {
        selected,
        clusters,
        noise_count,
        candidate_count: candidates.len(),
        foreground_count: fg.len(),
        params: *params,
    })
}

/// Clusters every non-background voxel of the grid on its predicted center.
/// Noise voxels get id 0; instance centers are member-position means.
pub fn instance_segment(
    sem: &SemanticGrid,
    affinity: &AffinityField,
    bg: &BackgroundList,
    params: &ClusterParams,
) -> Result<InstanceMap> {
    params.validate()?;
    let meta = *sem.meta();
    meta.ensure_same(affinity.meta(), "semantic grid vs affinity")?;
    let linear: Vec<usize> = sem
        .labels()
        .iter()
        .enumerate()
        .filter(|&(_, &l)| !bg.contains(l))
        .map(|(i, _)| i)
        .collect();
    let positions: Vec<VoxelIndex> = linear.iter().map(|&i| meta.unflatten(i)).collect();
    let centers = predicted_centers(&positions, affinity)?;
    let labels = dbscan(&centers, params);

    let count = labels.iter().copied().max().unwrap_or(NOISE) as usize;
    let mut ids = vec![0u32; meta.cell_count()];
    let mut class_counts = vec![[0u32; 256]; count];
    for (&lin, &label) in linear.iter().zip(&labels) {
        if label != NOISE {
            ids[lin] = label;
            class_counts[label as usize - 1][sem.labels()[lin] as usize] += 1;
        }
    }
    Ok(InstanceMap::from_ids(meta, ids, count, |id| {
        majority_of_counts(&class_counts[id as usize - 1])
    }))
}
