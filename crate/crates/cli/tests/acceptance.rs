//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p og-cli --test acceptance`. The process exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use common::*;
use http_body_util::BodyExt;
use og_cli::bundle::SceneBundle;
use og_cli::server::{router, AppState, GroundRequest};
use og_core::format;
use og_core::grounding::Mask2D;
use og_core::metrics::{rand_index, voxel_iou};
use og_core::synth::visible_instances;
use og_core::traverse::{traverse_grid, traverse_steps};
use og_core::*;
use og_testkit::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "partition recovery with ground-truth affinity",
            partition_recovery,
        ),
        ("end-to-end mask grounding", end_to_end_grounding),
        ("occlusion selects the nearer box", occlusion_selection),
        ("traversal matches sampling oracle", traversal_oracle),
        ("dbscan matches reference", dbscan_oracle),
        ("connected components match flood fill", components_oracle),
        ("loss arithmetic", loss_arithmetic),
        ("format round trips and golden bundle", format_round_trips),
        ("cli and service parity", cli_service_parity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// The fifty default scenes shared by the first two criteria.
fn scene_spec(seed: u64) -> SceneSpec {
    SceneSpec::new(seed, 3 + (seed % 6) as usize)
}

fn partition_recovery() -> Outcome {
    let params = ClusterParams::new(1.5, 4).unwrap();
    let mut elapsed = Duration::ZERO;
    let mut worst = 1.0f64;
    for seed in 0..50 {
        let start = Instant::now();
        let scene = generate_scene(&scene_spec(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let seg = instance_segment(&scene.sem, &aff, &bg, &params).map_err(|e| e.to_string())?;
        let ri = rand_index(seg.ids(), scene.gt_instances.ids());
        elapsed += start.elapsed();
        worst = worst.min(ri);
        ensure(ri == 1.0, || format!("seed {seed}: Rand index {ri}"))?;
    }
    let secs = elapsed.as_secs_f64();
    ensure(secs < 10.0, || format!("runtime {secs:.2}s exceeds 10s"))?;
    Ok(format!(
        "50 scenes, min Rand index {worst}, runtime {secs:.2}s < 10s"
    ))
}

/// Ground-truth instance holding most of `voxels`.
fn plurality_instance(inst: &InstanceMap, voxels: &[VoxelIndex]) -> u32 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for v in voxels {
        *counts.entry(inst.id_at(*v)).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(id, n)| (n, std::cmp::Reverse(id)))
        .map_or(0, |(id, _)| id)
}

fn end_to_end_grounding() -> Outcome {
    let params = ClusterParams::default();
    let (mut masks, mut wrong, mut min_iou) = (0, 0, 1.0f64);
    let mut failures = Vec::new();
    for seed in 0..50 {
        let scene = generate_scene(&scene_spec(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let view = render_view(&scene);
        for id in visible_instances(&view) {
            masks += 1;
            let mask = instance_mask(&view, id);
            let res = ground_mask(&mask, &scene.camera, &scene.sem, &aff, &bg, &params)
                .map_err(|e| e.to_string())?;
            let Some(sel) = res.selected else {
                min_iou = 0.0;
                failures.push(format!("seed {seed} id {id}: nothing selected"));
                continue;
            };
            if plurality_instance(&scene.gt_instances, &sel.voxels) != id {
                wrong += 1;
                failures.push(format!("seed {seed} id {id}: wrong instance"));
            }
            let iou = voxel_iou(&sel.voxels, &scene.gt_instances.members(id));
            min_iou = min_iou.min(iou);
            if iou < 0.99 {
                failures.push(format!("seed {seed} id {id}: IoU {iou:.4}"));
            }
        }
    }
    let detail =
        format!("{masks} visible-instance masks, min IoU {min_iou:.4}, wrong selections {wrong}");
    ensure(failures.is_empty(), || {
        format!(
            "{detail}; first failures: {:?}",
            &failures[..failures.len().min(5)]
        )
    })?;
    Ok(detail)
}

fn occlusion_selection() -> Outcome {
    let params = ClusterParams::default();
    let mut min_gap = f64::INFINITY;
    for seed in 0..20 {
        let case = occlusion_case(seed);
        let mask = case.shared_mask();
        ensure(mask.count() > 0, || {
            format!("case {seed}: boxes do not overlap in view")
        })?;
        let scene = &case.scene;
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let res = ground_mask(&mask, &scene.camera, &scene.sem, &aff, &bg, &params)
            .map_err(|e| e.to_string())?;
        let far: HashSet<VoxelIndex> = OcclusionCase::voxels(&case.far).into_iter().collect();
        let near: HashSet<VoxelIndex> = OcclusionCase::voxels(&case.near).into_iter().collect();
        ensure(
            res.clusters
                .iter()
                .any(|c| c.voxels.iter().all(|v| far.contains(v))),
            || {
                format!(
                    "case {seed}: no cluster from the far box among {} clusters",
                    res.clusters.len()
                )
            },
        )?;
        let sel = res
            .selected
            .as_ref()
            .ok_or_else(|| format!("case {seed}: nothing selected"))?;
        ensure(sel.voxels.iter().all(|v| near.contains(v)), || {
            format!("case {seed}: selection is not the near box")
        })?;
        for other in res
            .clusters
            .iter()
            .filter(|c| c.first_linear != sel.first_linear)
        {
            ensure(sel.depth < other.depth, || {
                format!("case {seed}: selected depth not strictly smaller")
            })?;
            min_gap = min_gap.min(other.depth - sel.depth);
        }
    }
    Ok(format!(
        "20 two-box scenes, nearer box always selected, min depth margin {min_gap:.3} m"
    ))
}

fn traversal_oracle() -> Outcome {
    let (mut rays, mut nudged, mut pairs) = (0, 0, 0usize);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for r in 0..1000 {
            let meta = random_meta(&mut rng);
            let range = meta.diagonal() * rng.gen_range(0.3..2.5);
            let (ray, was_nudged) = non_grazing_ray(&mut rng, &meta, range);
            rays += 1;
            nudged += usize::from(was_nudged);
            let got = traverse_grid(&ray, &meta, range);
            let want = sampled_traversal(&ray, &meta, range);
            ensure(got == want, || {
                format!(
                    "seed {seed} ray {r}: {} voxels vs oracle {}",
                    got.len(),
                    want.len()
                )
            })?;
            let steps = traverse_steps(&ray, &meta, range);
            for w in steps.windows(2) {
                pairs += 1;
                let d: usize = (0..3).map(|a| w[0].voxel[a].abs_diff(w[1].voxel[a])).sum();
                ensure(d == 1, || {
                    format!(
                        "seed {seed} ray {r}: {:?} -> {:?} not face neighbors",
                        w[0].voxel, w[1].voxel
                    )
                })?;
                ensure(w[1].entry > w[0].entry, || {
                    format!("seed {seed} ray {r}: entry not increasing")
                })?;
            }
        }
    }
    Ok(format!("{rays} rays exact ({nudged} perturbed off grazing), {pairs}/{pairs} consecutive pairs 6-adjacent"))
}

fn dbscan_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut largest = 0;
    for set in 0..100 {
        let pts = random_point_set(&mut rng);
        largest = largest.max(pts.len());
        let eps = rng.gen_range(1..6) as f64 * 0.5;
        let min_pts = rng.gen_range(1..8);
        let got = dbscan(&pts, &ClusterParams::new(eps, min_pts).unwrap());
        let want = textbook_dbscan(&pts, eps, min_pts);
        ensure(canonical(&got) == canonical(&want), || {
            format!("set {set}: partitions differ (eps {eps}, min_pts {min_pts})")
        })?;
    }
    Ok(format!(
        "100 point sets (n <= {largest}) identical up to relabeling"
    ))
}

fn components_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for trial in 0..200 {
        let grid = random_label_grid(&mut rng);
        for conn in [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ] {
            let got = connected_components(&grid, conn);
            let want = brute_force_components(&grid, conn.count());
            ensure(canonical(got.ids()) == canonical(&want), || {
                format!("trial {trial}, connectivity {}", conn.count())
            })?;
        }
    }
    Ok("200 grids up to 8x8x8, connectivity 6/18/26".into())
}

fn loss_arithmetic() -> Outcome {
    let meta = GridMeta::new([3, 3, 3], 0.1, [0.0; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<[f32; 3]> = (0..27)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0..3.0)))
        .collect();
    let a = AffinityField::new(meta, values).unwrap();
    let mask = LossMask::new(meta, (0..27).map(|i| i % 2 == 0).collect()).unwrap();
    let same = masked_mse(&a, &a, &mask).map_err(|e| e.to_string())?.mse;
    ensure(same == 0.0, || format!("masked_mse(a, a, m) = {same}"))?;

    let gt = AffinityField::zeros(meta);
    let mut pred = vec![[0.0f32; 3]; 27];
    pred[13] = [1.0, 2.0, 2.0];
    let single_mask = LossMask::new(meta, (0..27).map(|i| i == 13).collect()).unwrap();
    let single = masked_mse(&AffinityField::new(meta, pred).unwrap(), &gt, &single_mask)
        .map_err(|e| e.to_string())?
        .mse;
    ensure((single - 3.0).abs() <= 1e-9, || {
        format!("single-voxel (1,2,2) error gives {single}")
    })?;

    let total = total_loss(0.5, 0.25, 1.0);
    ensure(total == 0.75, || {
        format!("total_loss(0.5, 0.25, 1.0) = {total}")
    })?;
    Ok(format!(
        "mse(a,a)=0 exactly, single voxel {single}, total {total}"
    ))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn golden_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/seed7.sha256")
}

/// Synthesizes the seed-7 bundle and its `og gt` outputs with the given
/// worker count; returns file name and digest pairs.
fn golden_run(root: &Path, threads: usize) -> Result<Vec<(String, String)>, String> {
    let dir = root.join(format!("threads{threads}"));
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_og"))
            .args(args)
            .env("RAYON_NUM_THREADS", threads.to_string())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || {
            format!("og {}: {}", args[0], stderr(&o))
        })
    };
    run(&[
        "synth",
        "--seed",
        "7",
        "--objects",
        "3",
        "--out",
        path_str(&dir),
    ])?;
    let gt_dir = root.join(format!("gt{threads}"));
    std::fs::create_dir_all(&gt_dir).map_err(|e| e.to_string())?;
    let out = |n: &str| path_str(&gt_dir.join(n)).to_owned();
    run(&[
        "gt",
        "--grid",
        path_str(&dir.join("sem.ogrd")),
        "--out-instances",
        &out("gt_instances.ogrd"),
        "--out-affinity",
        &out("gt_affinity.ogrd"),
        "--out-mask",
        &out("gt_mask.ogrd"),
    ])?;
    let mut files = dir_contents(&dir);
    files.extend(dir_contents(&gt_dir));
    files.sort();
    Ok(files
        .into_iter()
        .map(|(n, b)| (n, sha256_hex(&b)))
        .collect())
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut pairs = 0;
    for trial in 0..50 {
        let grid = random_label_grid(&mut rng);
        let meta = *grid.meta();
        let inst = connected_components(&grid, Connectivity::TwentySix);
        let (_, mask) = affinity_gt(&inst);
        let values = (0..meta.cell_count())
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1e3f32..1e3)))
            .collect();
        let aff = AffinityField::new(meta, values).unwrap();
        let check = |kind: &str, first: &Path, second: &Path| -> Result<(), String> {
            let (a, b) = (
                std::fs::read(first).unwrap(),
                std::fs::read(second).unwrap(),
            );
            ensure(a == b, || {
                format!("trial {trial}: {kind} save/load/save differs")
            })
        };
        let io = |e: og_core::Error| e.to_string();
        format::save_grid(&grid, p("g1")).map_err(io)?;
        format::save_grid(&format::load_grid(p("g1")).map_err(io)?, p("g2")).map_err(io)?;
        check("labels", &p("g1"), &p("g2"))?;
        format::save_affinity(&aff, p("a1")).map_err(io)?;
        format::save_affinity(&format::load_affinity(p("a1")).map_err(io)?, p("a2")).map_err(io)?;
        check("affinity", &p("a1"), &p("a2"))?;
        format::save_instances(&inst, p("i1")).map_err(io)?;
        format::save_instances(&format::load_instances(p("i1")).map_err(io)?, p("i2"))
            .map_err(io)?;
        check("instances", &p("i1"), &p("i2"))?;
        format::save_mask(&mask, p("m1")).map_err(io)?;
        format::save_mask(&format::load_mask(p("m1")).map_err(io)?, p("m2")).map_err(io)?;
        check("mask", &p("m1"), &p("m2"))?;
        pairs += 4;
    }

    let runs = [1, 2, 8]
        .into_iter()
        .map(|t| golden_run(dir.path(), t))
        .collect::<Result<Vec<_>, _>>()?;
    ensure(runs.windows(2).all(|w| w[0] == w[1]), || {
        "seed-7 bundle differs between thread counts".into()
    })?;
    ensure(golden_run(dir.path(), 4)? == runs[0], || {
        "seed-7 bundle differs between runs".into()
    })?;

    let manifest =
        std::fs::read_to_string(golden_manifest()).map_err(|e| format!("golden manifest: {e}"))?;
    let recorded: Vec<(String, String)> = manifest
        .lines()
        .filter_map(|l| l.split_once("  "))
        .map(|(h, n)| (n.to_owned(), h.to_owned()))
        .collect();
    ensure(recorded == runs[0], || {
        let diff: Vec<&str> = runs[0]
            .iter()
            .filter(|f| !recorded.contains(f))
            .map(|(n, _)| n.as_str())
            .collect();
        format!("seed-7 bundle differs from recorded golden: {diff:?}")
    })?;
    Ok(format!(
        "{pairs} save/load pairs byte-identical; seed-7 bundle ({} files) matches golden at 1/2/4/8 threads",
        recorded.len()
    ))
}

async fn post_ground(
    app: &axum::Router,
    req: &GroundRequest,
) -> Result<(StatusCode, Vec<u8>), String> {
    let body = serde_json::to_string(req).map_err(|e| e.to_string())?;
    let request = Request::builder()
        .method(Method::POST)
        .uri("/api/ground")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .map_err(|e| e.to_string())?;
    let resp = app
        .clone()
        .oneshot(request)
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .map_err(|e| e.to_string())?
        .to_bytes()
        .to_vec();
    Ok((status, bytes))
}

/// Pixels within `radius` of `(u, v)` inside a `w` x `h` image.
fn disc(u: u32, v: u32, radius: i64, w: u32, h: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for dv in -radius..=radius {
        for du in -radius..=radius {
            let (x, y) = (i64::from(u) + du, i64::from(v) + dv);
            if du * du + dv * dv <= radius * radius
                && x >= 0
                && y >= 0
                && x < i64::from(w)
                && y < i64::from(h)
            {
                out.push([x as u32, y as u32]);
            }
        }
    }
    out
}

fn cli_service_parity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let backgrounds: [Option<&[&str]>; 4] = [
        None,
        Some(&["ceiling", "floor", "wall"]),
        Some(&["wall"]),
        Some(&[]),
    ];
    let (mut queries, mut selected) = (0, 0);
    for scene_seed in 0..4u64 {
        let bundle = synth_bundle(
            dir.path(),
            &format!("scene{scene_seed}"),
            100 + scene_seed,
            5,
        );
        let app = router(Arc::new(AppState::new(
            SceneBundle::load(&bundle).map_err(|f| f.message)?,
        )));
        let aff = dir.path().join(format!("affinity{scene_seed}.ogrd"));
        let scratch =
            |n: &str| path_str(&dir.path().join(format!("{n}{scene_seed}.ogrd"))).to_owned();
        let o = og(&[
            "gt",
            "--grid",
            path_str(&bundle.join("sem.ogrd")),
            "--out-instances",
            &scratch("i"),
            "--out-affinity",
            path_str(&aff),
            "--out-mask",
            &scratch("m"),
        ]);
        ensure(code(&o) == 0, || stderr(&o))?;
        let view: RenderedView =
            serde_json::from_slice(&std::fs::read(bundle.join("view.json")).unwrap())
                .map_err(|e| e.to_string())?;
        let occupied: Vec<usize> = (0..view.instance.len())
            .filter(|&p| view.instance[p] != 0)
            .collect();

        for q in 0..5 {
            // mostly clicks on objects, sometimes anywhere
            let p = if rng.gen_bool(0.8) {
                occupied[rng.gen_range(0..occupied.len())]
            } else {
                rng.gen_range(0..view.instance.len())
            };
            let (u, v) = (p as u32 % view.width, p as u32 / view.width);
            let pixels = disc(u, v, rng.gen_range(0..5), view.width, view.height);
            let bg = backgrounds[rng.gen_range(0..backgrounds.len())];
            let req = GroundRequest {
                pixels: pixels.clone(),
                eps: rng
                    .gen_bool(0.7)
                    .then(|| [1.0, 1.5, 2.0][rng.gen_range(0..3)]),
                min_pts: rng.gen_bool(0.7).then(|| rng.gen_range(1..7)),
                background: bg.map(|b| b.iter().map(|s| s.to_string()).collect()),
            };
            let (status, served) = runtime.block_on(post_ground(&app, &req))?;
            ensure(status == StatusCode::OK, || {
                format!("scene {scene_seed} query {q}: status {status}")
            })?;

            let mask_path = dir.path().join(format!("q{scene_seed}_{q}.pgm"));
            let out_path = dir.path().join(format!("q{scene_seed}_{q}.json"));
            std::fs::write(
                &mask_path,
                Mask2D::from_pixels(view.width, view.height, &pixels)
                    .unwrap()
                    .to_pgm(),
            )
            .map_err(|e| e.to_string())?;
            let mut args: Vec<String> = [
                "ground",
                "--grid",
                path_str(&bundle.join("sem.ogrd")),
                "--affinity",
                path_str(&aff),
                "--mask",
                path_str(&mask_path),
                "--camera",
                path_str(&bundle.join("camera.json")),
                "--out",
                path_str(&out_path),
            ]
            .map(String::from)
            .to_vec();
            if let Some(eps) = req.eps {
                args.extend(["--eps".into(), eps.to_string()]);
            }
            if let Some(m) = req.min_pts {
                args.extend(["--min-pts".into(), m.to_string()]);
            }
            if let Some(b) = bg {
                args.extend(["--background".into(), b.join(",")]);
            }
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let o = og(&args);
            let written = std::fs::read(&out_path)
                .map_err(|e| format!("scene {scene_seed} query {q}: {e}; {}", stderr(&o)))?;
            ensure(written == served, || {
                format!("scene {scene_seed} query {q}: payloads differ")
            })?;
            let report: og_core::GroundingReport =
                serde_json::from_slice(&served).map_err(|e| e.to_string())?;
            let want_code = if report.selected.is_some() { 0 } else { 3 };
            ensure(code(&o) == want_code, || {
                format!(
                    "scene {scene_seed} query {q}: exit {} but selection {}",
                    code(&o),
                    report.selected.is_some()
                )
            })?;
            queries += 1;
            selected += usize::from(report.selected.is_some());
        }
    }
    Ok(format!(
        "{queries} randomized queries byte-identical ({selected} with a selection)"
    ))
}
