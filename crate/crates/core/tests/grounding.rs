//! Mask grounding end to end on synthetic scenes.

use std::collections::HashSet;

use og_core::grounding::scene_range;
use og_core::metrics::{rand_index, voxel_iou};
use og_core::synth::visible_instances;
use og_core::traverse::traverse_grid;
use og_core::*;
use og_testkit::{canonical, occlusion_case, OcclusionCase};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_visible_instance_is_recovered() {
    for seed in [1u64, 2, 3] {
        let scene = generate_scene(&SceneSpec::new(seed, 5)).unwrap();
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let view = render_view(&scene);
        let visible = visible_instances(&view);
        assert!(!visible.is_empty());
        for id in visible {
            let mask = instance_mask(&view, id);
            let res = ground_mask(
                &mask,
                &scene.camera,
                &scene.sem,
                &aff,
                &bg,
                &ClusterParams::default(),
            )
            .unwrap();
            let sel = res.selected.expect("visible instance grounds to a cluster");
            let truth = scene.gt_instances.members(id);
            assert!(
                voxel_iou(&sel.voxels, &truth) >= 0.99,
                "seed {seed} id {id}"
            );
            let rec = scene.gt_instances.record(id).unwrap();
            assert_eq!(sel.class, rec.class);
        }
    }
}

#[test]
fn segmentation_reproduces_components() {
    for seed in [4u64, 5] {
        let scene = generate_scene(&SceneSpec::new(seed, 6)).unwrap();
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let seg = instance_segment(&scene.sem, &aff, &bg, &ClusterParams::default()).unwrap();
        assert_eq!(rand_index(seg.ids(), scene.gt_instances.ids()), 1.0);
        assert_eq!(canonical(seg.ids()), canonical(scene.gt_instances.ids()));
    }
}

#[test]
fn nearer_box_wins_under_occlusion() {
    for seed in 0..8 {
        let case = occlusion_case(seed);
        let mask = case.shared_mask();
        assert!(
            mask.count() > 0,
            "seed {seed}: boxes do not overlap in view"
        );
        let scene = &case.scene;
        let (aff, _) = affinity_gt(&scene.gt_instances);
        let bg = BackgroundList::default_for(scene.sem.class_table());
        let res = ground_mask(
            &mask,
            &scene.camera,
            &scene.sem,
            &aff,
            &bg,
            &ClusterParams::default(),
        )
        .unwrap();
        assert!(res.clusters.len() >= 2, "seed {seed}: far box not reached");
        let sel = res.selected.unwrap();
        let near: HashSet<_> = OcclusionCase::voxels(&case.near).into_iter().collect();
        assert!(sel.voxels.iter().all(|v| near.contains(v)), "seed {seed}");
        for other in res
            .clusters
            .iter()
            .filter(|c| c.first_linear != sel.first_linear)
        {
            assert!(sel.depth < other.depth);
        }
    }
}

#[test]
fn background_only_mask_has_no_foreground() {
    let scene = generate_scene(&SceneSpec::new(9, 0)).unwrap();
    let (aff, _) = affinity_gt(&scene.gt_instances);
    let bg = BackgroundList::default_for(scene.sem.class_table());
    let view = render_view(&scene);
    let flags = view.class.iter().map(|&c| c != 0).collect();
    let mask = Mask2D::new(view.width, view.height, flags).unwrap();
    assert!(mask.count() > 0);
    let res = ground_mask(
        &mask,
        &scene.camera,
        &scene.sem,
        &aff,
        &bg,
        &ClusterParams::default(),
    )
    .unwrap();
    assert!(res.is_no_foreground());
    assert!(res.selected.is_none() && res.candidate_count > 0);
}

/// A default scene seen through a 32x24 version of its camera.
fn small_scene() -> Scene {
    let scene = generate_scene(&SceneSpec::new(11, 3)).unwrap();
    let c = &scene.camera;
    let s = 0.2;
    let cam = PinholeCamera::new(
        c.fx() * s,
        c.fy() * s,
        c.cx() * s,
        c.cy() * s,
        32,
        24,
        *c.rotation(),
        c.position(),
    )
    .unwrap();
    Scene::from_grid(scene.sem, cam)
}

fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, p: f64) -> Mask2D {
    let flags = (0..w * h).map(|_| rng.gen_bool(p)).collect();
    Mask2D::new(w, h, flags).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn candidates_are_union_of_scan_lines(seed in any::<u64>(), p in 0.0f64..0.3) {
        let scene = small_scene();
        let cam = &scene.camera;
        let meta = scene.sem.meta();
        let mask = random_mask(&mut ChaCha8Rng::seed_from_u64(seed), cam.width(), cam.height(), p);
        let got = candidate_voxels(&mask, cam, meta).unwrap();
        let range = scene_range(meta, &cam.position());
        let mut want = Vec::new();
        let mut seen = HashSet::new();
        for row in 0..cam.height() {
            for col in 0..cam.width() {
                if mask.get(col, row) {
                    for v in traverse_grid(&cam.pixel_center_ray(col, row).unwrap(), meta, range) {
                        if seen.insert(v) {
                            want.push(v);
                        }
                    }
                }
            }
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn growing_the_mask_grows_candidates(seed in any::<u64>()) {
        let scene = small_scene();
        let cam = &scene.camera;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = random_mask(&mut rng, cam.width(), cam.height(), 0.1);
        let extra = random_mask(&mut rng, cam.width(), cam.height(), 0.1);
        let flags = small.flags().iter().zip(extra.flags()).map(|(a, b)| *a || *b).collect();
        let big = Mask2D::new(cam.width(), cam.height(), flags).unwrap();
        let a: HashSet<_> = candidate_voxels(&small, cam, scene.sem.meta()).unwrap().into_iter().collect();
        let b: HashSet<_> = candidate_voxels(&big, cam, scene.sem.meta()).unwrap().into_iter().collect();
        prop_assert!(a.is_subset(&b));
    }
}
