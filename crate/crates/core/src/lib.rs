//! Instance segmentation for semantic voxel occupancy via affinity fields,
//! and grounding of 2D masks or clicks to 3D voxel instances.
//!
//! The pieces, bottom-up:
//!
//! - [`grid`]: dense voxel volumes and world/voxel conversion; [`format`] stores them.
//! - [`instance`]: connected-component instances, centers, affinity targets, losses.
//! - [`camera`] and [`traverse`]: pixel rays and the voxels they cross.
//! - [`cluster`]: DBSCAN over predicted instance centers.
//! - [`grounding`]: mask-to-instance lifting and full-grid segmentation.
//! - [`synth`]: seeded box scenes and a first-hit renderer for testing all of the above.

pub mod camera;
pub mod cluster;
pub mod error;
pub mod format;
pub mod grid;
pub mod grounding;
pub mod instance;
pub mod metrics;
pub mod synth;
pub mod traverse;

pub use camera::{PinholeCamera, Ray};
pub use cluster::{dbscan, predicted_centers, ClusterParams, NOISE};
pub use error::{Error, Result};
pub use grid::{
    AffinityField, ClassTable, GridMeta, InstanceMap, InstanceRecord, LossMask, SemanticGrid,
    VoxelIndex,
};
pub use grounding::{
    candidate_voxels, filter_foreground, ground_mask, instance_segment, BackgroundList,
    GroundingReport, GroundingResult, Mask2D,
};
pub use instance::{
    affinity_gt, connected_components, instance_center, masked_mse, total_loss, AffinityEval,
    Connectivity,
};
pub use synth::{generate_scene, instance_mask, render_view, RenderedView, Scene, SceneSpec};
pub use traverse::{traverse_grid, traverse_steps, Traversal, TraversalStep};
