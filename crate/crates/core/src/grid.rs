//! Dense voxel containers and world/voxel coordinate conversion.
//!
//! Every volume stores one value per cell in linear-index order, where voxel
//! `(i, j, k)` lives at `(k * ny + j) * nx + i`. Centers and affinity vectors
//! are expressed in continuous voxel-index units; only [`GridMeta`] knows about
//! meters.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer voxel coordinates `(i, j, k)`.
pub type VoxelIndex = [usize; 3];

/// Placement of a grid in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    dims: [u32; 3],
    voxel_size: f32,
    origin: [f32; 3],
}

impl GridMeta {
    pub fn new(dims: [u32; 3], voxel_size: f32, origin: [f32; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "voxel size must be positive and finite, got {voxel_size}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid origin must be finite, got {origin:?}"
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::Size(format!("cell count of {dims:?} overflows")))?;
        Ok(Self {
            dims,
            voxel_size,
            origin,
        })
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f32 {
        self.voxel_size
    }

    pub fn origin(&self) -> [f32; 3] {
        self.origin
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn contains(&self, idx: VoxelIndex) -> bool {
        idx.iter().zip(self.dims).all(|(&v, d)| v < d as usize)
    }

    /// Linear index of an in-range voxel. Panics on out-of-range input in debug builds.
    #[inline]
    pub fn linear_index(&self, idx: VoxelIndex) -> usize {
        debug_assert!(self.contains(idx), "voxel {idx:?} outside {:?}", self.dims);
        let [nx, ny, _] = self.dims.map(|d| d as usize);
        (idx[2] * ny + idx[1]) * nx + idx[0]
    }

    #[inline]
    pub fn unflatten(&self, linear: usize) -> VoxelIndex {
        let [nx, ny, _] = self.dims.map(|d| d as usize);
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    /// Voxel containing a world point, or `None` when the point lies outside.
    ///
    /// Points on an interior face belong to the higher-index voxel; the max
    /// corner itself is outside.
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Option<VoxelIndex> {
        let size = f64::from(self.voxel_size);
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let rel = (p[axis] - f64::from(self.origin[axis])) / size;
            let cell = rel.floor();
            if !(cell >= 0.0 && cell < f64::from(self.dims[axis])) {
                return None;
            }
            out[axis] = cell as usize;
        }
        Some(out)
    }

    /// World position (meters) of a voxel center.
    pub fn voxel_to_world(&self, idx: VoxelIndex) -> Result<Vector3<f64>> {
        if !self.contains(idx) {
            return Err(Error::OutOfRange(format!(
                "voxel {idx:?} outside grid {:?}",
                self.dims
            )));
        }
        Ok(self.voxel_center(idx))
    }

    /// Unchecked variant of [`GridMeta::voxel_to_world`] for indices already known to be valid.
    #[inline]
    pub(crate) fn voxel_center(&self, idx: VoxelIndex) -> Vector3<f64> {
        let size = f64::from(self.voxel_size);
        Vector3::from_fn(|axis, _| f64::from(self.origin[axis]) + (idx[axis] as f64 + 0.5) * size)
    }

    pub fn world_min(&self) -> Vector3<f64> {
        Vector3::from_fn(|axis, _| f64::from(self.origin[axis]))
    }

    pub fn world_max(&self) -> Vector3<f64> {
        let size = f64::from(self.voxel_size);
        Vector3::from_fn(|axis, _| f64::from(self.origin[axis]) + f64::from(self.dims[axis]) * size)
    }

    /// Length of the grid's space diagonal in meters.
    pub fn diagonal(&self) -> f64 {
        (self.world_max() - self.world_min()).norm()
    }

    pub(crate) fn ensure_same(&self, other: &GridMeta, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {:?}/{}/{:?} vs {:?}/{}/{:?}",
                self.dims, self.voxel_size, self.origin, other.dims, other.voxel_size, other.origin
            )))
        }
    }
}

/// Ordered class names; id 0 is always `"empty"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassTable(Vec<String>);

impl ClassTable {
    pub const EMPTY: &'static str = "empty";

    pub fn new(names: Vec<String>) -> Result<Self> {
        match names.first() {
            Some(first) if first == Self::EMPTY => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "class table must start with \"empty\"".into(),
                ))
            }
        }
        if names.len() > 256 {
            return Err(Error::InvalidParameter(format!(
                "class table has {} entries, at most 256 fit in 8-bit labels",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(Self(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.0.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.0.iter().position(|n| n == name).map(|p| p as u8)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for ClassTable {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ClassTable> for Vec<String> {
    fn from(table: ClassTable) -> Self {
        table.0
    }
}

fn check_len(meta: &GridMeta, len: usize, what: &str) -> Result<()> {
    if len == meta.cell_count() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has {len} cells, grid {:?} needs {}",
            meta.dims(),
            meta.cell_count()
        )))
    }
}

/// Per-voxel semantic class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    meta: GridMeta,
    labels: Vec<u8>,
    class_table: ClassTable,
}

impl SemanticGrid {
    pub fn new(meta: GridMeta, labels: Vec<u8>, class_table: ClassTable) -> Result<Self> {
        check_len(&meta, labels.len(), "label volume")?;
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= class_table.len()) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside class table of {} entries",
                class_table.len()
            )));
        }
        Ok(Self {
            meta,
            labels,
            class_table,
        })
    }

    /// All-empty grid.
    pub fn empty(meta: GridMeta, class_table: ClassTable) -> Self {
        Self {
            labels: vec![0; meta.cell_count()],
            meta,
            class_table,
        }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.class_table
    }

    pub fn label(&self, idx: VoxelIndex) -> u8 {
        self.labels[self.meta.linear_index(idx)]
    }
}

/// Per-voxel offset from the voxel to its instance center, in voxel-index units.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityField {
    meta: GridMeta,
    values: Vec<[f32; 3]>,
}

impl AffinityField {
    pub fn new(meta: GridMeta, values: Vec<[f32; 3]>) -> Result<Self> {
        check_len(&meta, values.len(), "affinity volume")?;
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "affinity values must be finite".into(),
            ));
        }
        Ok(Self { meta, values })
    }

    pub fn zeros(meta: GridMeta) -> Self {
        Self {
            values: vec![[0.0; 3]; meta.cell_count()],
            meta,
        }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[[f32; 3]] {
        &self.values
    }

    pub fn get(&self, idx: VoxelIndex) -> [f32; 3] {
        self.values[self.meta.linear_index(idx)]
    }
}

/// Voxels that participate in the affinity loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMask {
    meta: GridMeta,
    flags: Vec<bool>,
}

impl LossMask {
    pub fn new(meta: GridMeta, flags: Vec<bool>) -> Result<Self> {
        check_len(&meta, flags.len(), "loss mask")?;
        Ok(Self { meta, flags })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Summary of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub class: u8,
    /// Mean member position in voxel-index units.
    pub center: [f32; 3],
    pub voxel_count: u32,
}

/// Per-voxel instance ids (0 = none) with one record per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    meta: GridMeta,
    ids: Vec<u32>,
    instances: Vec<InstanceRecord>,
}

impl InstanceMap {
    /// Builds a map after checking that records and per-voxel ids agree.
    pub fn new(meta: GridMeta, ids: Vec<u32>, instances: Vec<InstanceRecord>) -> Result<Self> {
        check_len(&meta, ids.len(), "instance volume")?;
        for (pos, rec) in instances.iter().enumerate() {
            if rec.id as usize != pos + 1 {
                return Err(Error::InvalidParameter(format!(
                    "instance ids must be 1..N in order, record {pos} has id {}",
                    rec.id
                )));
            }
            if rec.voxel_count == 0 {
                return Err(Error::InvalidParameter(format!(
                    "instance {} has zero voxels",
                    rec.id
                )));
            }
        }
        let mut counts = vec![0u32; instances.len()];
        for &id in &ids {
            if id == 0 {
                continue;
            }
            let slot = counts.get_mut(id as usize - 1).ok_or_else(|| {
                Error::InvalidParameter(format!("voxel carries unknown instance id {id}"))
            })?;
            *slot += 1;
        }
        for (rec, &count) in instances.iter().zip(&counts) {
            if rec.voxel_count != count {
                return Err(Error::InvalidParameter(format!(
                    "instance {} records {} voxels but {} cells carry it",
                    rec.id, rec.voxel_count, count
                )));
            }
        }
        Ok(Self {
            meta,
            ids,
            instances,
        })
    }

    pub fn empty(meta: GridMeta) -> Self {
        Self {
            ids: vec![0; meta.cell_count()],
            meta,
            instances: Vec::new(),
        }
    }

    /// Builds records from per-voxel ids that are already numbered 1..N by
    /// first appearance in `order`. `class_of` supplies the class for each id.
    pub(crate) fn from_ids(
        meta: GridMeta,
        ids: Vec<u32>,
        instance_count: usize,
        mut class_of: impl FnMut(u32) -> u8,
    ) -> Self {
        let mut sums = vec![[0f64; 3]; instance_count];
        let mut counts = vec![0u32; instance_count];
        for (linear, &id) in ids.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let idx = meta.unflatten(linear);
            let slot = id as usize - 1;
            counts[slot] += 1;
            for axis in 0..3 {
                sums[slot][axis] += idx[axis] as f64;
            }
        }
        let instances = (0..instance_count)
            .map(|slot| {
                let n = f64::from(counts[slot]);
                let id = slot as u32 + 1;
                InstanceRecord {
                    id,
                    class: class_of(id),
                    center: sums[slot].map(|s| (s / n) as f32),
                    voxel_count: counts[slot],
                }
            })
            .collect();
        Self {
            meta,
            ids,
            instances,
        }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn id_at(&self, idx: VoxelIndex) -> u32 {
        self.ids[self.meta.linear_index(idx)]
    }

    pub fn record(&self, id: u32) -> Option<&InstanceRecord> {
        id.checked_sub(1)
            .and_then(|slot| self.instances.get(slot as usize))
    }

    /// Member voxels of one instance, in linear-index order.
    pub fn members(&self, id: u32) -> Vec<VoxelIndex> {
        self.ids
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == id && id != 0)
            .map(|(linear, _)| self.meta.unflatten(linear))
            .collect()
    }

    /// Keeps only instances whose class satisfies `keep`, renumbering the
    /// survivors 1..M in their original order.
    pub fn retain_classes(&self, mut keep: impl FnMut(u8) -> bool) -> Self {
        let mut remap = vec![0u32; self.instances.len() + 1];
        let mut instances = Vec::new();
        for rec in &self.instances {
            if keep(rec.class) {
                let new_id = instances.len() as u32 + 1;
                remap[rec.id as usize] = new_id;
                instances.push(InstanceRecord { id: new_id, ..*rec });
            }
        }
        let ids = self.ids.iter().map(|&id| remap[id as usize]).collect();
        Self {
            meta: self.meta,
            ids,
            instances,
        }
    }
}
