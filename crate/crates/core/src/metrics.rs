//! Partition and overlap scores used to compare segmentations.

use std::collections::{HashMap, HashSet};

use crate::grid::VoxelIndex;

fn pairs(n: u64) -> u128 {
    u128::from(n) * u128::from(n.saturating_sub(1)) / 2
}

/// Rand index between two labelings of the same items. Each distinct label
/// (including 0) is one block. Returns 1.0 for fewer than two items.
pub fn rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as u64;
    if n < 2 {
        return 1.0;
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let same_both: u128 = joint.values().map(|&c| pairs(c)).sum();
    let same_a: u128 = rows.values().map(|&c| pairs(c)).sum();
    let same_b: u128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // pairs split in both = total - same_a - same_b + same_both
    let agree = total + 2 * same_both - same_a - same_b;
    agree as f64 / total as f64
}

/// Intersection over union of two voxel sets.
pub fn voxel_iou(a: &[VoxelIndex], b: &[VoxelIndex]) -> f64 {
    let sa: HashSet<VoxelIndex> = a.iter().copied().collect();
    let sb: HashSet<VoxelIndex> = b.iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
