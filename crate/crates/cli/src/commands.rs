//! Argument definitions and command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use og_core::format;
use og_core::grounding::Mask2D;
use og_core::synth::visible_instances;
use og_core::{
    affinity_gt, connected_components, generate_scene, instance_segment, masked_mse, render_view,
    ClusterParams, Connectivity, SceneSpec,
};

use crate::bundle::{self, background, ground_report, load_camera, parse_class_list};
use crate::output::Staged;
use crate::{CmdResult, Failure, EXIT_EMPTY, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "og",
    version,
    about = "Voxel instance segmentation and 2D-to-3D grounding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene bundle with its rendered view and masks.
    Synth(SynthArgs),
    /// Derive instances, affinity targets and loss mask from a semantic grid.
    Gt(GtArgs),
    /// Masked affinity error between a prediction and a target.
    Eval(EvalArgs),
    /// Ground a 2D mask to the nearest 3D instance.
    Ground(GroundArgs),
    /// Segment every non-background voxel into instances.
    Segment(SegmentArgs),
    /// Serve a scene bundle over HTTP on localhost.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub objects: usize,
    /// Grid size in voxels, as X,Y,Z.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<[u32; 3]>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// 6, 18 or 26.
    #[arg(long, default_value = "26")]
    pub connectivity: Connectivity,
    /// Comma-separated classes left out of the instances; "" keeps all.
    #[arg(long)]
    pub background: Option<String>,
    #[arg(long)]
    pub out_instances: PathBuf,
    #[arg(long)]
    pub out_affinity: PathBuf,
    #[arg(long)]
    pub out_mask: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Occupancy loss term; when given, the total loss is reported too.
    #[arg(long)]
    pub l_ori: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Args, Clone)]
pub struct ClusterArgs {
    /// Neighborhood radius in voxels.
    #[arg(long, default_value_t = 1.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 4)]
    pub min_pts: usize,
    /// Comma-separated background classes.
    #[arg(long)]
    pub background: Option<String>,
}

impl ClusterArgs {
    fn params(&self) -> CmdResult<ClusterParams> {
        ClusterParams::new(self.eps, self.min_pts).map_err(Failure::from)
    }

    fn background_names(&self) -> Option<Vec<String>> {
        self.background.as_deref().map(parse_class_list)
    }
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub affinity: PathBuf,
    /// Binary PGM; nonzero pixels are in the mask.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub affinity: PathBuf,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

fn parse_dims(s: &str) -> Result<[u32; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got {s:?}"));
    }
    let mut dims = [0u32; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(dims)
}

/// Runs a parsed command and returns its exit code. Diagnostics go to stderr.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Gt(a) => gt(&a),
        Command::Eval(a) => eval(&a),
        Command::Ground(a) => ground(&a),
        Command::Segment(a) => segment(&a),
        Command::Serve(a) => crate::server::serve(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("og: {}", f.message);
            f.code
        }
    }
}

fn load<T>(path: &Path, f: impl FnOnce(&Path) -> og_core::Result<T>) -> CmdResult<T> {
    f(path).map_err(|e| Failure::from(e).context(path.display()))
}

pub fn synth(a: &SynthArgs) -> CmdResult<u8> {
    let mut spec = SceneSpec::new(a.seed, a.objects);
    if let Some(dims) = a.dims {
        spec = spec.with_dims(dims)?;
    }
    let scene = generate_scene(&spec)?;
    let view = render_view(&scene);

    let mut out = Staged::new();
    out.ensure_dir(&a.out)?;
    let at = |name: &str| a.out.join(name);
    out.add(at(bundle::SEM_FILE), &format::encode_grid(&scene.sem))?;
    out.add(
        at(bundle::INSTANCES_FILE),
        &format::encode_instances(&scene.gt_instances),
    )?;
    out.add(
        at(bundle::CAMERA_FILE),
        bundle::camera_json(&scene.camera).as_bytes(),
    )?;
    let mut spec_json = serde_json::to_string_pretty(&spec).expect("spec is always serializable");
    spec_json.push('\n');
    out.add(at(bundle::SPEC_FILE), spec_json.as_bytes())?;
    out.add(at(bundle::VIEW_FILE), view.to_json_string().as_bytes())?;
    let visible = visible_instances(&view);
    for &id in &visible {
        let mask = og_core::instance_mask(&view, id);
        out.add(at(&bundle::mask_file_name(id)), &mask.to_pgm())?;
    }
    out.commit()?;
    eprintln!(
        "og: wrote {} with {} instances ({} visible)",
        a.out.display(),
        scene.gt_instances.instances().len(),
        visible.len()
    );
    Ok(EXIT_OK)
}

pub fn gt(a: &GtArgs) -> CmdResult<u8> {
    let sem = load(&a.grid, |p| format::load_grid(p))?;
    let names = a.background.as_deref().map(parse_class_list);
    let bg = background(names.as_deref(), sem.class_table())?;
    let inst = connected_components(&sem, a.connectivity).retain_classes(|c| !bg.contains(c));
    let (aff, mask) = affinity_gt(&inst);

    let mut out = Staged::new();
    out.add(&a.out_instances, &format::encode_instances(&inst))?;
    out.add(&a.out_affinity, &format::encode_affinity(&aff))?;
    out.add(&a.out_mask, &format::encode_mask(&mask))?;
    out.commit()?;
    eprintln!("og: {} instances", inst.instances().len());
    Ok(EXIT_OK)
}

pub fn eval(a: &EvalArgs) -> CmdResult<u8> {
    let pred = load(&a.pred, |p| format::load_affinity(p))?;
    let gt = load(&a.gt, |p| format::load_affinity(p))?;
    let mask = load(&a.mask, |p| format::load_mask(p))?;
    let mut result = masked_mse(&pred, &gt, &mask)?;
    if let Some(l_ori) = a.l_ori {
        result = result.with_total(l_ori, a.lambda);
    }
    println!(
        "{}",
        serde_json::to_string(&result).expect("eval is always serializable")
    );
    Ok(EXIT_OK)
}

pub fn ground(a: &GroundArgs) -> CmdResult<u8> {
    let sem = load(&a.grid, |p| format::load_grid(p))?;
    let affinity = load(&a.affinity, |p| format::load_affinity(p))?;
    let pgm = fs::read(&a.mask).map_err(|e| Failure::from(e).context(a.mask.display()))?;
    let mask = Mask2D::from_pgm(&pgm).map_err(|e| Failure::from(e).context(a.mask.display()))?;
    let cam = load_camera(&a.camera)?;
    let names = a.cluster.background_names();
    let bg = background(names.as_deref(), sem.class_table())?;
    let params = a.cluster.params()?;
    let report = ground_report(&mask, &cam, &sem, &affinity, &bg, &params)?;

    let mut out = Staged::new();
    out.add(&a.out, report.to_json_string().as_bytes())?;
    out.commit()?;
    match &report.selected {
        Some(sel) => {
            eprintln!(
                "og: selected {} ({} voxels, depth {:.3} m) of {} clusters",
                sel.class,
                sel.voxels.len(),
                sel.depth,
                report.clusters.len()
            );
            Ok(EXIT_OK)
        }
        None => {
            eprintln!("og: no foreground instance under the mask");
            Ok(EXIT_EMPTY)
        }
    }
}

pub fn segment(a: &SegmentArgs) -> CmdResult<u8> {
    let sem = load(&a.grid, |p| format::load_grid(p))?;
    let affinity = load(&a.affinity, |p| format::load_affinity(p))?;
    let names = a.cluster.background_names();
    let bg = background(names.as_deref(), sem.class_table())?;
    let params = a.cluster.params()?;
    let inst = instance_segment(&sem, &affinity, &bg, &params)?;
    let mut out = Staged::new();
    out.add(&a.out, &format::encode_instances(&inst))?;
    out.commit()?;
    eprintln!("og: {} instances", inst.instances().len());
    Ok(EXIT_OK)
}
