//! Instance ground truth from semantic grids: connected components, geometry
//! centers, affinity targets and the masked affinity loss.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AffinityField, InstanceMap, LossMask, SemanticGrid, VoxelIndex};

/// Neighbor stencil for voxel connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 6, 18 or 26, got {n}"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::Eighteen => 18,
            Self::TwentySix => 26,
        }
    }

    /// Neighbor offsets in a fixed order.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        // number of nonzero components: 1 = face, 2 = edge, 3 = corner
        let max_nonzero = match self {
            Self::Six => 1,
            Self::Eighteen => 2,
            Self::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(self.count() as usize);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                    if nonzero >= 1 && nonzero <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::InvalidParameter(format!("bad connectivity {s:?}")))?;
        Self::from_count(n)
    }
}

/// Labels same-class connected regions. Ids are assigned 1..N in order of
/// each component's smallest linear index.
pub fn connected_components(grid: &SemanticGrid, conn: Connectivity) -> InstanceMap {
    let meta = *grid.meta();
    let dims = meta.dims().map(i64::from);
    let labels = grid.labels();
    let offsets = conn.offsets();
    let mut ids = vec![0u32; labels.len()];
    let mut classes = Vec::new();
    let mut stack = Vec::new();

    for seed in 0..labels.len() {
        let class = labels[seed];
        if class == 0 || ids[seed] != 0 {
            continue;
        }
        classes.push(class);
        let id = classes.len() as u32;
        ids[seed] = id;
        stack.push(seed);
        while let Some(cur) = stack.pop() {
            let idx = meta.unflatten(cur);
            for off in &offsets {
                let mut nb = [0usize; 3];
                let mut inside = true;
                for axis in 0..3 {
                    let v = idx[axis] as i64 + off[axis];
                    if v < 0 || v >= dims[axis] {
                        inside = false;
                        break;
                    }
                    nb[axis] = v as usize;
                }
                if !inside {
                    continue;
                }
                let lin = meta.linear_index(nb);
                if ids[lin] == 0 && labels[lin] == class {
                    ids[lin] = id;
                    stack.push(lin);
                }
            }
        }
    }

    let count = classes.len();
    InstanceMap::from_ids(meta, ids, count, |id| classes[id as usize - 1])
}

/// Arithmetic mean of member voxel indices.
pub fn instance_center(members: &[VoxelIndex]) -> Result<[f64; 3]> {
    if members.is_empty() {
        return Err(Error::InvalidParameter(
            "instance center of an empty member list".into(),
        ));
    }
    let mut sum = [0f64; 3];
    for m in members {
        for axis in 0..3 {
            sum[axis] += m[axis] as f64;
        }
    }
    let n = members.len() as f64;
    Ok(sum.map(|s| s / n))
}

/// Exact (f64) centers of every instance, indexed by `id - 1`.
pub(crate) fn exact_centers(inst: &InstanceMap) -> Vec<[f64; 3]> {
    let n = inst.instances().len();
    let mut sums = vec![[0f64; 3]; n];
    let mut counts = vec![0u64; n];
    for (linear, &id) in inst.ids().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let idx = inst.meta().unflatten(linear);
        let slot = id as usize - 1;
        counts[slot] += 1;
        for axis in 0..3 {
            sums[slot][axis] += idx[axis] as f64;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| s.map(|v| v / c as f64))
        .collect()
}

/// Ground-truth affinity (position minus instance center) and the loss mask.
///
/// Centers are recomputed in double precision from the member voxels, so the
/// stored `f32` record centers do not feed rounding into the targets.
pub fn affinity_gt(inst: &InstanceMap) -> (AffinityField, LossMask) {
    let meta = *inst.meta();
    let centers = exact_centers(inst);
    let mut values = vec![[0f32; 3]; inst.ids().len()];
    let mut flags = vec![false; inst.ids().len()];
    for (linear, &id) in inst.ids().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let idx = meta.unflatten(linear);
        let c = centers[id as usize - 1];
        values[linear] = [0, 1, 2].map(|a| (idx[a] as f64 - c[a]) as f32);
        flags[linear] = true;
    }
    (
        AffinityField::new(meta, values).expect("finite by construction"),
        LossMask::new(meta, flags).expect("sized by construction"),
    )
}

/// Result of comparing a predicted affinity field against its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffinityEval {
    pub mse: f64,
    #[serde(rename = "masked_voxels")]
    pub masked_voxel_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_loss: Option<f64>,
}

/// Mean squared error over the 3 components of every masked voxel. Zero when
/// nothing is masked.
pub fn masked_mse(
    pred: &AffinityField,
    gt: &AffinityField,
    mask: &LossMask,
) -> Result<AffinityEval> {
    pred.meta().ensure_same(gt.meta(), "prediction vs target")?;
    pred.meta().ensure_same(mask.meta(), "prediction vs mask")?;
    let mut sum = 0f64;
    let mut count = 0usize;
    for ((p, g), &m) in pred.values().iter().zip(gt.values()).zip(mask.flags()) {
        if !m {
            continue;
        }
        count += 1;
        for axis in 0..3 {
            let d = f64::from(p[axis]) - f64::from(g[axis]);
            sum += d * d;
        }
    }
    let mse = if count == 0 {
        0.0
    } else {
        sum / (3 * count) as f64
    };
    Ok(AffinityEval {
        mse,
        masked_voxel_count: count,
        total_loss: None,
    })
}

/// Occupancy loss plus the weighted affinity loss.
pub fn total_loss(l_ori: f64, l_aff: f64, lambda: f64) -> f64 {
    l_ori + lambda * l_aff
}

impl AffinityEval {
    pub fn with_total(mut self, l_ori: f64, lambda: f64) -> Self {
        self.total_loss = Some(total_loss(l_ori, self.mse, lambda));
        self
    }
}
