//! Seeded synthetic indoor scenes and a first-hit voxel renderer.
//!
//! A scene is a room shell (floor slab plus two wall slabs) holding
//! axis-aligned boxes, seen by one pinhole camera mounted in the upper corner
//! opposite the walls. Rendering a scene gives per-pixel class, instance and
//! depth images, from which per-instance masks are cut.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::error::{Error, Result};
use crate::grid::{ClassTable, GridMeta, InstanceMap, SemanticGrid};
use crate::grounding::{scene_range, BackgroundList, Mask2D};
use crate::instance::{connected_components, Connectivity};
use crate::traverse::Traversal;

pub const DEFAULT_DIMS: [u32; 3] = [64, 64, 32];
pub const DEFAULT_VOXEL_SIZE: f32 = 0.08;
pub const DEFAULT_IMAGE: [u32; 2] = [160, 120];

const DEFAULT_CLASSES: [&str; 13] = [
    "empty",
    "ceiling",
    "floor",
    "wall",
    "window",
    "chair",
    "bed",
    "sofa",
    "table",
    "tvs",
    "furniture",
    "objects",
    "lamp",
];

/// Horizontal field of view of the default camera, degrees.
const DEFAULT_FOV_DEG: f64 = 60.0;

/// Margin (pixels) kept between box silhouettes and the image border or
/// each other when placement avoids occlusion.
const SILHOUETTE_MARGIN: f64 = 1.0;

/// `empty` plus twelve object and structure classes.
pub fn default_class_table() -> ClassTable {
    ClassTable::new(DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect())
        .expect("default table is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub meta: GridMeta,
    pub object_count: usize,
    /// Class ids that boxes are drawn from.
    pub class_pool: Vec<u8>,
    /// Inclusive per-axis box extents, in voxels.
    pub size_min: [u32; 3],
    pub size_max: [u32; 3],
    pub include_room_shell: bool,
    /// Image width and height in pixels.
    pub image: [u32; 2],
    /// Reject placements whose image silhouettes overlap, so every box is
    /// fully visible.
    pub occlusion_free: bool,
}

impl SceneSpec {
    /// Default room for a seed and object count.
    pub fn new(seed: u64, object_count: usize) -> Self {
        let table = default_class_table();
        let bg = BackgroundList::default_for(&table);
        Self {
            seed,
            meta: GridMeta::new(DEFAULT_DIMS, DEFAULT_VOXEL_SIZE, [0.0; 3])
                .expect("default meta is valid"),
            object_count,
            class_pool: (1..table.len() as u8)
                .filter(|&c| !bg.contains(c))
                .collect(),
            size_min: [3, 3, 3],
            size_max: [8, 8, 8],
            include_room_shell: true,
            image: DEFAULT_IMAGE,
            occlusion_free: true,
        }
    }

    pub fn with_dims(mut self, dims: [u32; 3]) -> Result<Self> {
        self.meta = GridMeta::new(dims, self.meta.voxel_size(), self.meta.origin())?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let meta = GridMeta::new(self.meta.dims(), self.meta.voxel_size(), self.meta.origin())?;
        let table = default_class_table();
        let bg = BackgroundList::default_for(&table);
        if self.object_count > 0 && self.class_pool.is_empty() {
            return Err(Error::InvalidParameter("class pool is empty".into()));
        }
        if let Some(c) = self
            .class_pool
            .iter()
            .find(|&&c| c as usize >= table.len() || bg.contains(c))
        {
            return Err(Error::InvalidParameter(format!(
                "class {c} cannot be used for objects"
            )));
        }
        let shell = u32::from(self.include_room_shell);
        for axis in 0..3 {
            let (lo, hi) = (self.size_min[axis], self.size_max[axis]);
            if lo == 0 || lo > hi || hi + shell > meta.dims()[axis] {
                return Err(Error::InvalidParameter(format!(
                    "box size range {lo}..={hi} does not fit axis {axis} of {:?}",
                    meta.dims()
                )));
            }
        }
        if self.image.contains(&0) {
            return Err(Error::InvalidParameter(
                "image size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// An axis-aligned box of voxels `[min, min + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedBox {
    pub min: [u32; 3],
    pub size: [u32; 3],
    pub class: u8,
}

impl PlacedBox {
    fn max_excl(&self) -> [u32; 3] {
        [0, 1, 2].map(|a| self.min[a] + self.size[a])
    }

    /// True when the two boxes are at least one empty voxel apart in
    /// Chebyshev distance (no 26-neighbor contact).
    pub fn separated_from(&self, other: &PlacedBox) -> bool {
        let (a_hi, b_hi) = (self.max_excl(), other.max_excl());
        (0..3).any(|axis| a_hi[axis] < other.min[axis] || b_hi[axis] < self.min[axis])
    }

    fn corners_world(&self, meta: &GridMeta) -> [Vector3<f64>; 8] {
        let size = f64::from(meta.voxel_size());
        let lo = meta.world_min();
        let hi = self.max_excl();
        std::array::from_fn(|c| {
            Vector3::new(
                lo.x + f64::from(if c & 1 == 0 { self.min[0] } else { hi[0] }) * size,
                lo.y + f64::from(if c & 2 == 0 { self.min[1] } else { hi[1] }) * size,
                lo.z + f64::from(if c & 4 == 0 { self.min[2] } else { hi[2] }) * size,
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    min: [f64; 2],
    max: [f64; 2],
}

impl Rect {
    fn overlaps(&self, other: &Rect) -> bool {
        (0..2).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }
}

/// Image-space bounding rectangle of a box, grown by the margin, when the
/// whole box lies in front of the camera and inside the image.
fn silhouette(b: &PlacedBox, meta: &GridMeta, cam: &PinholeCamera) -> Option<Rect> {
    let mut rect = Rect {
        min: [f64::INFINITY; 2],
        max: [f64::NEG_INFINITY; 2],
    };
    for corner in b.corners_world(meta) {
        let (u, v, _) = cam.project_unbounded(&corner)?;
        rect.min = [rect.min[0].min(u), rect.min[1].min(v)];
        rect.max = [rect.max[0].max(u), rect.max[1].max(v)];
    }
    rect.min = rect.min.map(|x| x - SILHOUETTE_MARGIN);
    rect.max = rect.max.map(|x| x + SILHOUETTE_MARGIN);
    let inside = rect.min[0] >= 0.0
        && rect.min[1] >= 0.0
        && rect.max[0] <= f64::from(cam.width())
        && rect.max[1] <= f64::from(cam.height());
    inside.then_some(rect)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sem: SemanticGrid,
    /// Same-class 26-connected components of the non-background voxels.
    pub gt_instances: InstanceMap,
    pub camera: PinholeCamera,
    /// Boxes as generated; empty for scenes built from a grid.
    pub boxes: Vec<PlacedBox>,
}

impl Scene {
    /// Wraps an existing grid and camera, deriving the instance ground truth.
    pub fn from_grid(sem: SemanticGrid, camera: PinholeCamera) -> Self {
        let gt_instances = scene_instances(&sem);
        Self {
            sem,
            gt_instances,
            camera,
            boxes: Vec::new(),
        }
    }
}

/// Ground-truth instances of a scene grid: 26-connected components with the
/// default background classes dropped.
pub fn scene_instances(sem: &SemanticGrid) -> InstanceMap {
    let bg = BackgroundList::default_for(sem.class_table());
    connected_components(sem, Connectivity::TwentySix).retain_classes(|c| !bg.contains(c))
}

/// Camera in the upper corner opposite the walls, looking at the middle of
/// the room slightly below half height.
pub fn default_camera(meta: &GridMeta, image: [u32; 2]) -> Result<PinholeCamera> {
    let size = f64::from(meta.voxel_size());
    let lo = meta.world_min();
    let dims = meta.dims().map(f64::from);
    let at = |x: f64, y: f64, z: f64| lo + Vector3::new(x, y, z) * size;
    let eye = at(dims[0] - 1.5, dims[1] - 1.5, dims[2] - 1.5);
    let target = at(dims[0] * 0.4, dims[1] * 0.4, dims[2] * 0.3);
    let [w, h] = image.map(f64::from);
    let f = (w / 2.0) / (DEFAULT_FOV_DEG.to_radians() / 2.0).tan();
    PinholeCamera::look_at(
        f,
        f,
        w / 2.0,
        h / 2.0,
        image[0],
        image[1],
        eye,
        target,
        Vector3::z(),
    )
}

fn region_bounds(meta: &GridMeta, shell: bool) -> ([u32; 3], [u32; 3]) {
    let lo = if shell { [1, 1, 1] } else { [0, 0, 0] };
    (lo, meta.dims())
}

/// Generates a scene; the same spec always yields the same scene.
///
/// Boxes are placed by rejection sampling with a total budget of
/// `10 * object_count^2` attempts. Object slot `n` draws from its own ChaCha8
/// stream (`seed`, stream `n + 1`), so adding objects never perturbs earlier
/// ones.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let meta = spec.meta;
    let table = default_class_table();
    let camera = default_camera(&meta, spec.image)?;
    let eye = camera.position();
    let size = f64::from(meta.voxel_size());
    let (region_lo, region_hi) = region_bounds(&meta, spec.include_room_shell);
    let range = scene_range(&meta, &eye);

    let budget = 10 * spec.object_count * spec.object_count;
    let mut attempts = 0usize;
    let mut boxes: Vec<PlacedBox> = Vec::with_capacity(spec.object_count);
    let mut rects: Vec<Rect> = Vec::with_capacity(spec.object_count);
    let mut streams: Vec<ChaCha8Rng> = Vec::new();

    while boxes.len() < spec.object_count {
        if attempts >= budget {
            return Err(Error::PlacementFailure {
                attempts,
                placed: boxes.len(),
                requested: spec.object_count,
            });
        }
        attempts += 1;
        let slot = boxes.len();
        if streams.len() <= slot {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(slot as u64 + 1);
            streams.push(rng);
        }
        let rng = &mut streams[slot];

        let extent: [u32; 3] =
            std::array::from_fn(|a| rng.gen_range(spec.size_min[a]..=spec.size_max[a]));
        let class = spec.class_pool[rng.gen_range(0..spec.class_pool.len())];
        let u = rng.gen_range(0.1..0.9) * f64::from(spec.image[0]);
        let v = rng.gen_range(0.1..0.9) * f64::from(spec.image[1]);
        let depth_frac: f64 = rng.gen_range(0.25..0.85);

        let ray = camera.pixel_to_ray(u, v)?;
        let anchor = ray.at(depth_frac * range);
        let mut min = [0u32; 3];
        let mut fits = true;
        for axis in 0..3 {
            let c = (anchor[axis] - meta.world_min()[axis]) / size - f64::from(extent[axis]) / 2.0;
            let c = c.round();
            if c < f64::from(region_lo[axis])
                || c + f64::from(extent[axis]) > f64::from(region_hi[axis])
            {
                fits = false;
                break;
            }
            min[axis] = c as u32;
        }
        if !fits {
            continue;
        }
        let candidate = PlacedBox {
            min,
            size: extent,
            class,
        };
        if !boxes.iter().all(|b| b.separated_from(&candidate)) {
            continue;
        }
        let rect = if spec.occlusion_free {
            match silhouette(&candidate, &meta, &camera) {
                Some(r) if rects.iter().all(|o| !o.overlaps(&r)) => Some(r),
                _ => continue,
            }
        } else {
            None
        };
        boxes.push(candidate);
        rects.extend(rect);
    }

    let mut labels = vec![0u8; meta.cell_count()];
    let [nx, ny, nz] = meta.dims();
    if spec.include_room_shell {
        let floor = table.id_of("floor").expect("default table");
        let wall = table.id_of("wall").expect("default table");
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let label = if k == 0 {
                        floor
                    } else if i == 0 || j == 0 {
                        wall
                    } else {
                        continue;
                    };
                    labels[meta.linear_index([i as usize, j as usize, k as usize])] = label;
                }
            }
        }
    }
    for b in &boxes {
        for k in b.min[2]..b.min[2] + b.size[2] {
            for j in b.min[1]..b.min[1] + b.size[1] {
                for i in b.min[0]..b.min[0] + b.size[0] {
                    labels[meta.linear_index([i as usize, j as usize, k as usize])] = b.class;
                }
            }
        }
    }
    let sem = SemanticGrid::new(meta, labels, table)?;
    let mut scene = Scene::from_grid(sem, camera);
    scene.boxes = boxes;
    Ok(scene)
}

/// Per-pixel first-hit images, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ViewFile", into = "ViewFile")]
pub struct RenderedView {
    pub width: u32,
    pub height: u32,
    pub class: Vec<u8>,
    pub instance: Vec<u32>,
    /// Ray distance (meters) to the first occupied voxel; `+inf` on a miss.
    pub depth: Vec<f64>,
}

/// JSON form of a view; misses carry `null` depth.
#[derive(Serialize, Deserialize)]
struct ViewFile {
    width: u32,
    height: u32,
    class: Vec<u8>,
    instance: Vec<u32>,
    depth: Vec<Option<f64>>,
}

impl From<ViewFile> for RenderedView {
    fn from(f: ViewFile) -> Self {
        Self {
            width: f.width,
            height: f.height,
            class: f.class,
            instance: f.instance,
            depth: f
                .depth
                .into_iter()
                .map(|d| d.unwrap_or(f64::INFINITY))
                .collect(),
        }
    }
}

impl From<RenderedView> for ViewFile {
    fn from(v: RenderedView) -> Self {
        Self {
            width: v.width,
            height: v.height,
            class: v.class,
            instance: v.instance,
            depth: v
                .depth
                .into_iter()
                .map(|d| d.is_finite().then_some(d))
                .collect(),
        }
    }
}

impl RenderedView {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string(self).expect("view is always serializable");
        s.push('\n');
        s
    }
}

/// First non-empty voxel along the ray through each pixel center.
pub fn render_view(scene: &Scene) -> RenderedView {
    let cam = &scene.camera;
    let meta = scene.sem.meta();
    let (w, h) = (cam.width(), cam.height());
    let range = scene_range(meta, &cam.position());
    let pixels: Vec<(u8, u32, f64)> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|p| {
            let (col, row) = ((p % w as usize) as u32, (p / w as usize) as u32);
            let ray = cam
                .pixel_center_ray(col, row)
                .expect("pixel centers lie inside the image");
            Traversal::new(&ray, meta, range)
                .find_map(|step| {
                    let class = scene.sem.label(step.voxel);
                    (class != 0).then(|| (class, scene.gt_instances.id_at(step.voxel), step.entry))
                })
                .unwrap_or((0, 0, f64::INFINITY))
        })
        .collect();
    RenderedView {
        width: w,
        height: h,
        class: pixels.iter().map(|p| p.0).collect(),
        instance: pixels.iter().map(|p| p.1).collect(),
        depth: pixels.iter().map(|p| p.2).collect(),
    }
}

/// Pixels whose first hit belongs to instance `id`.
pub fn instance_mask(view: &RenderedView, id: u32) -> Mask2D {
    let flags = view.instance.iter().map(|&i| id != 0 && i == id).collect();
    Mask2D::new(view.width, view.height, flags).expect("view arrays match its size")
}

/// Instance ids that appear in a view, ascending.
pub fn visible_instances(view: &RenderedView) -> Vec<u32> {
    let mut ids: Vec<u32> = view.instance.iter().copied().filter(|&i| i != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}
