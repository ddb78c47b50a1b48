//! Scene bundle directories and the shared grounding entry point.

use std::fs;
use std::path::Path;

use og_core::format;
use og_core::grounding::{GroundingReport, Mask2D};
use og_core::{
    affinity_gt, ground_mask, AffinityField, BackgroundList, ClassTable, ClusterParams,
    InstanceMap, PinholeCamera, SemanticGrid,
};

use crate::{CmdResult, Failure};

pub const SEM_FILE: &str = "sem.ogrd";
pub const INSTANCES_FILE: &str = "instances.ogrd";
pub const AFFINITY_FILE: &str = "affinity.ogrd";
pub const CAMERA_FILE: &str = "camera.json";
pub const SPEC_FILE: &str = "spec.json";
pub const VIEW_FILE: &str = "view.json";

pub fn mask_file_name(id: u32) -> String {
    format!("mask_{id}.pgm")
}

pub fn load_camera(path: &Path) -> CmdResult<PinholeCamera> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::io(e.to_string()).context(path.display()))
}

pub fn camera_json(cam: &PinholeCamera) -> String {
    let mut s = serde_json::to_string_pretty(cam).expect("camera is always serializable");
    s.push('\n');
    s
}

/// Splits a comma-separated class list; an empty string means no classes.
pub fn parse_class_list(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Resolves background names against a class table; `None` means the default list.
pub fn background(names: Option<&[String]>, table: &ClassTable) -> CmdResult<BackgroundList> {
    match names {
        None => Ok(BackgroundList::default_for(table)),
        Some(names) => BackgroundList::from_names(names, table).map_err(Failure::from),
    }
}

/// Grounding as exposed by both `og ground` and `POST /api/ground`.
pub fn ground_report(
    mask: &Mask2D,
    cam: &PinholeCamera,
    sem: &SemanticGrid,
    affinity: &AffinityField,
    bg: &BackgroundList,
    params: &ClusterParams,
) -> CmdResult<GroundingReport> {
    if mask.width() != cam.width() || mask.height() != cam.height() {
        return Err(Failure::usage(format!(
            "mask is {}x{} but the camera image is {}x{}",
            mask.width(),
            mask.height(),
            cam.width(),
            cam.height()
        )));
    }
    let result = ground_mask(mask, cam, sem, affinity, bg, params)?;
    Ok(result.report(sem.class_table()))
}

/// A loaded scene bundle. Affinity comes from `affinity.ogrd` when present,
/// otherwise from the bundle's instances.
pub struct SceneBundle {
    pub sem: SemanticGrid,
    pub instances: InstanceMap,
    pub affinity: AffinityField,
    pub camera: PinholeCamera,
    /// Exact bytes of `view.json`, rendered afresh when the file is absent.
    pub view_json: String,
}

impl SceneBundle {
    pub fn load(dir: &Path) -> CmdResult<Self> {
        let at = |name: &str| dir.join(name);
        let ctx = |name: &'static str| {
            move |e: og_core::Error| Failure::from(e).context(dir.join(name).display())
        };
        let sem = format::load_grid(at(SEM_FILE)).map_err(ctx(SEM_FILE))?;
        let instances = format::load_instances(at(INSTANCES_FILE)).map_err(ctx(INSTANCES_FILE))?;
        let camera = load_camera(&at(CAMERA_FILE))?;
        let mismatch = |what: &str| {
            Failure::io(format!(
                "{what} does not match the grid in {}",
                dir.display()
            ))
        };
        if instances.meta() != sem.meta() {
            return Err(mismatch(INSTANCES_FILE));
        }
        let affinity = if at(AFFINITY_FILE).exists() {
            let a = format::load_affinity(at(AFFINITY_FILE)).map_err(ctx(AFFINITY_FILE))?;
            if a.meta() != sem.meta() {
                return Err(mismatch(AFFINITY_FILE));
            }
            a
        } else {
            affinity_gt(&instances).0
        };
        let view_json = if at(VIEW_FILE).exists() {
            fs::read_to_string(at(VIEW_FILE))
                .map_err(|e| Failure::from(e).context(at(VIEW_FILE).display()))?
        } else {
            let scene = og_core::Scene {
                sem: sem.clone(),
                gt_instances: instances.clone(),
                camera: camera.clone(),
                boxes: Vec::new(),
            };
            og_core::render_view(&scene).to_json_string()
        };
        Ok(Self {
            sem,
            instances,
            affinity,
            camera,
            view_json,
        })
    }
}
