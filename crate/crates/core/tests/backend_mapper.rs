mod common;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{UnitQuaternion, Vector2};
use proptest::prelude::*;
use surfel_slam::evaluation::align_sim3;
use surfel_slam::geometry::{quat, Se3Pose, Sim3, Vec3};
use surfel_slam::mapping::{
    adaptive_voxelize, fuse, prune, refine, to_world, DepthThreshold, FusionConfig, GlobalSurfelMap, Mapper,
    MapperConfig, RefineConfig, SurfelGrid, VoxelizationConfig,
};
use surfel_slam::oracle::{NoiseModel, Oracle};
use surfel_slam::pipeline::{run_tracking, TrackingConfig};
use surfel_slam::pose_graph::pose_updates;
use surfel_slam::raster::{CameraIntrinsics, Rasterizer, RenderTargets, Surfel};
use surfel_slam::Error;

use common::{oracle, random_sim3, rng};

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::desk_scale()
}

fn wall_surfel(intr: &CameraIntrinsics, x: usize, y: usize, depth: f64, color: Vec3) -> Surfel {
    let mean = intr.unproject(x as f64, y as f64, depth);
    let footprint = depth / intr.fx;
    Surfel::new(mean, UnitQuaternion::identity(), Vector2::new(footprint, footprint), 0.95, color)
}

/// Fronto-parallel wall filling the image, one surfel per pixel.
fn wall_grid(intr: &CameraIntrinsics, depth: f64) -> SurfelGrid {
    let cells = (0..intr.height)
        .flat_map(|y| (0..intr.width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let c = Vec3::new(x as f64 / intr.width as f64, y as f64 / intr.height as f64, 0.5);
            Some(wall_surfel(intr, x, y, depth, c))
        })
        .collect();
    SurfelGrid {
        width: intr.width,
        height: intr.height,
        cells,
    }
}

fn absolute(v: f64) -> VoxelizationConfig {
    VoxelizationConfig {
        depth_threshold: DepthThreshold::Absolute(v),
    }
}

fn single_keyframe_map(surfels: &[Surfel]) -> GlobalSurfelMap {
    let mut map = GlobalSurfelMap::new();
    map.register_keyframe(0, Sim3::identity());
    for s in surfels {
        map.insert(*s).unwrap();
    }
    map
}

fn own_render(map: &GlobalSurfelMap, intr: &CameraIntrinsics) -> RenderTargets {
    let b = Rasterizer::default().render(&map.surfels, &Se3Pose::identity(), intr).buffers;
    RenderTargets {
        rgb: b.color.clone(),
        depth: b.normalized_depth(0.5),
    }
}

#[test]
fn identical_block_merges_to_itself() {
    let s = wall_surfel(&camera(), 3, 3, 2.0, Vec3::new(0.2, 0.4, 0.6));
    let grid = SurfelGrid {
        width: 2,
        height: 2,
        cells: vec![Some(s); 4],
    };
    let out = adaptive_voxelize(&grid, &VoxelizationConfig::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert!((out[0].mean - s.mean).norm() < 1e-15);
    assert!(out[0].rotation.angle_to(&s.rotation) < 1e-15);
    assert_eq!((out[0].scale, out[0].opacity, out[0].color), (s.scale, s.opacity, s.color));
}

#[test]
fn sign_flipped_quaternion_does_not_cancel() {
    let q = quat(0.8, 0.2, -0.4, 0.4);
    let mut s = wall_surfel(&camera(), 3, 3, 2.0, Vec3::new(0.2, 0.4, 0.6));
    s.rotation = q;
    let mut flipped = s;
    flipped.rotation = UnitQuaternion::new_unchecked(-q.into_inner());
    let grid = SurfelGrid {
        width: 2,
        height: 2,
        cells: vec![Some(s), Some(flipped), Some(s), Some(s)],
    };
    let out = adaptive_voxelize(&grid, &VoxelizationConfig::default()).unwrap();
    assert!(out[0].rotation.angle_to(&q) < 1e-12);
}

#[test]
fn flat_wall_merges_every_block() {
    let intr = camera();
    let grid = wall_grid(&intr, 2.0);
    let out = adaptive_voxelize(&grid, &absolute(1e9)).unwrap();
    assert_eq!(out.len(), intr.width * intr.height / 4);
}

#[test]
fn deep_blocks_pass_through() {
    let intr = camera();
    let mut grid = wall_grid(&intr, 2.0);
    let step = wall_surfel(&intr, 1, 1, 3.0, Vec3::zeros());
    grid.cells[intr.width + 1] = Some(step);
    let out = adaptive_voxelize(&grid, &VoxelizationConfig::default()).unwrap();
    assert_eq!(out.len(), intr.width * intr.height / 4 - 1 + 4);
    assert!(out.iter().any(|s| s.mean == step.mean));
}

proptest! {
    #[test]
    fn unlimited_threshold_quarters_even_grids(w in 1usize..12, h in 1usize..12, depth in 0.5f64..5.0) {
        let intr = CameraIntrinsics::new(50.0, 50.0, w as f64, h as f64, 2 * w, 2 * h).unwrap();
        let grid = wall_grid(&intr, depth);
        let out = adaptive_voxelize(&grid, &absolute(f64::MAX)).unwrap();
        prop_assert_eq!(out.len(), w * h);
    }
}

#[test]
fn empty_map_takes_every_candidate() {
    let intr = camera();
    let grid = wall_grid(&intr, 2.0);
    let candidates: Vec<Surfel> = grid.surfels().copied().collect();
    let mut map = GlobalSurfelMap::new();
    map.register_keyframe(0, Sim3::identity());
    let stats = fuse(&mut map, &Rasterizer::default(), &intr, &candidates, 0, &FusionConfig::default()).unwrap();
    assert_eq!(stats.inserted, candidates.len());
}

#[test]
fn refusing_the_same_frame_inserts_almost_nothing() {
    let o = oracle(20, NoiseModel::zero(1));
    let intr = o.scene.intrinsics;
    let pred = o.predict_frame(0, &o.submap_state(0, 0));
    let candidates = pred.surfels(0, 0);
    let mut map = GlobalSurfelMap::new();
    map.register_keyframe(0, Sim3::identity());
    let r = Rasterizer::default();
    let first = fuse(&mut map, &r, &intr, &candidates, 0, &FusionConfig::default()).unwrap();
    let second = fuse(&mut map, &r, &intr, &candidates, 0, &FusionConfig::default()).unwrap();
    assert!(first.inserted > 0);
    assert!((second.inserted as f64) < 0.05 * first.inserted as f64, "{} then {}", first.inserted, second.inserted);
}

#[test]
fn scaled_keyframe_pose_scales_means_and_extents() {
    let mut r = rng(1);
    let pose = Sim3::new(2.0, random_sim3(&mut r).rotation, Vec3::new(0.3, -1.0, 2.0));
    let s = wall_surfel(&camera(), 10, 20, 1.5, Vec3::new(0.1, 0.2, 0.3));
    let w = to_world(&s, &pose, 7);
    let expected = pose.rotation * s.mean * 2.0 + pose.translation;
    assert!((w.mean - expected).norm() < 1e-15);
    assert_eq!(w.scale, s.scale * 2.0);
    assert_eq!(w.keyframe_id, 7);
}

#[test]
fn perfect_map_is_not_pruned() {
    let intr = camera();
    let mut map = single_keyframe_map(&wall_grid(&intr, 2.0).surfels().copied().collect::<Vec<_>>());
    let observed = own_render(&map, &intr);
    let removed = prune(&mut map, &Rasterizer::default(), &intr, 0, &observed, &FusionConfig::default()).unwrap();
    assert_eq!(removed, 0);
}

#[test]
fn injected_occluder_is_the_only_surfel_pruned() {
    let intr = camera();
    let wall: Vec<Surfel> = wall_grid(&intr, 2.0).surfels().copied().collect();
    let observed = own_render(&single_keyframe_map(&wall), &intr);
    // Opaque at its own pixel centre, negligible on the neighbours.
    let mut occluder = wall_surfel(&intr, 32, 24, 1.0, Vec3::new(1.0, 0.0, 1.0));
    occluder.scale *= 0.2;
    occluder.opacity = 1.0;
    let mut surfels = wall.clone();
    surfels.push(occluder);
    let mut map = single_keyframe_map(&surfels);
    let removed = prune(&mut map, &Rasterizer::default(), &intr, 0, &observed, &FusionConfig::default()).unwrap();
    assert_eq!(removed, 1);
    assert_eq!(map.surfels, wall);

    let mut untouched = single_keyframe_map(&surfels);
    let off = FusionConfig {
        prune_rgb_error: f64::INFINITY,
        prune_depth_error: f64::INFINITY,
        ..Default::default()
    };
    assert_eq!(prune(&mut untouched, &Rasterizer::default(), &intr, 0, &observed, &off).unwrap(), 0);
}

fn oracle_frame_map(o: &Oracle, frame: usize) -> (GlobalSurfelMap, RenderTargets) {
    let pred = o.predict_frame(frame, &o.submap_state(0, frame));
    let map = single_keyframe_map(&pred.surfels(0, 0));
    let view = o.view(frame);
    let targets = RenderTargets {
        rgb: view.rgb.clone(),
        depth: view.depth.clone(),
    };
    (map, targets)
}

#[test]
fn refining_an_optimal_map_changes_nothing() {
    let intr = camera();
    let mut map = single_keyframe_map(&wall_grid(&intr, 2.0).surfels().copied().collect::<Vec<_>>());
    let b = Rasterizer::default().render(&map.surfels, &Se3Pose::identity(), &intr).buffers;
    let targets = RenderTargets {
        rgb: b.color.clone(),
        depth: b.depth.clone(),
    };
    let report = refine(&mut map, &Rasterizer::default(), &intr, &[(0, &targets)], &RefineConfig::default()).unwrap();
    let first = report.losses[0];
    assert!(report.losses.iter().all(|l| (l - first).abs() < 1e-10));
}

#[test]
fn zero_iterations_leave_the_map_untouched() {
    let o = oracle(10, NoiseModel::zero(1));
    let (mut map, targets) = oracle_frame_map(&o, 0);
    let before = map.clone();
    let cfg = RefineConfig {
        iterations: 0,
        ..Default::default()
    };
    refine(&mut map, &Rasterizer::default(), &o.scene.intrinsics, &[(0, &targets)], &cfg).unwrap();
    assert_eq!(map, before);
}

#[test]
fn refinement_recovers_desaturated_colors() {
    let o = oracle(10, NoiseModel::zero(1));
    let (mut map, targets) = oracle_frame_map(&o, 0);
    for s in &mut map.surfels {
        let gray = s.color.mean();
        s.color = s.color * 0.3 + Vec3::repeat(gray * 0.7);
    }
    let cfg = RefineConfig {
        iterations: 10,
        ..Default::default()
    };
    let report = refine(&mut map, &Rasterizer::default(), &o.scene.intrinsics, &[(0, &targets)], &cfg).unwrap();
    let gain = report.psnr_after.unwrap().db().unwrap() - report.psnr_before.unwrap().db().unwrap();
    assert!(gain >= 1.0, "gain {gain} dB");
    assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
    for s in &map.surfels {
        assert!(s.color.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!((0.0..=1.0).contains(&s.opacity));
    }
}

#[test]
fn identity_deltas_leave_the_map_bitwise_unchanged() {
    let o = oracle(10, NoiseModel::zero(1));
    let (mut map, _) = oracle_frame_map(&o, 0);
    let before = map.clone();
    map.loop_correct(&BTreeMap::from([(0, Sim3::identity())])).unwrap();
    assert_eq!(map, before);
}

#[test]
fn uniform_delta_is_a_rigid_motion_of_the_render() {
    let o = oracle(10, NoiseModel::zero(1));
    let (map, _) = oracle_frame_map(&o, 0);
    let r = Rasterizer::default();
    let mut g = rng(2);
    for _ in 0..5 {
        let d = Sim3::new(1.0, random_sim3(&mut g).rotation, Vec3::new(0.2, -0.1, 0.3));
        let mut moved = map.clone();
        moved.loop_correct(&BTreeMap::from([(0, d)])).unwrap();
        let a = r.render(&map.surfels, &Se3Pose::identity(), &o.scene.intrinsics).buffers;
        let b = r.render(&moved.surfels, &d.to_se3(), &o.scene.intrinsics).buffers;
        for (x, y) in a.color.data.iter().zip(&b.color.data) {
            assert!((0..3).all(|k| (x[k] - y[k]).abs() < 1e-6));
        }
    }
}

#[test]
fn missing_delta_is_reported() {
    let o = oracle(10, NoiseModel::zero(1));
    let (mut map, _) = oracle_frame_map(&o, 0);
    assert!(matches!(map.loop_correct(&BTreeMap::new()), Err(Error::MissingDelta(0))));
}

#[test]
fn mapper_keeps_every_surfel_bound() {
    let o = oracle(30, NoiseModel::default());
    let mut mapper = Mapper::new(MapperConfig::default(), Default::default(), o.scene.intrinsics);
    let state = o.submap_state(0, 0);
    for f in 0..6 {
        let pred = o.predict_frame(f, &state);
        let pose = pred.pose_in_submap.to_sim3(1.0);
        mapper.integrate(f as u32, 0, pose, &pred, o.view(f).rgb.clone()).unwrap();
        mapper.map.check_binding().unwrap();
        let bound: usize = mapper.map.keyframe_index.values().map(Vec::len).sum();
        assert_eq!(bound, mapper.map.len());
    }
    assert!(mapper.stats.voxelized < mapper.stats.candidates);
    let updates: Vec<_> = (0..6)
        .map(|k| surfel_slam::pose_graph::PoseUpdate {
            node: k,
            old: Sim3::identity(),
            new: Sim3::identity(),
            delta: Sim3::from_translation(Vec3::new(0.1, 0.0, 0.0)),
        })
        .collect();
    let before: Vec<Vec3> = mapper.map.surfels.iter().map(|s| s.mean).collect();
    mapper.apply_correction(&updates).unwrap();
    for (a, s) in before.iter().zip(&mapper.map.surfels) {
        assert!((s.mean - a - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
    }
    mapper.map.check_binding().unwrap();
}

#[test]
fn removal_rebuilds_the_binding_index() {
    let intr = camera();
    let mut map = GlobalSurfelMap::new();
    map.register_keyframe(0, Sim3::identity());
    map.register_keyframe(1, Sim3::identity());
    let wall: Vec<Surfel> = wall_grid(&intr, 2.0).surfels().copied().collect();
    for (k, s) in wall.iter().take(40).enumerate() {
        let mut s = *s;
        s.keyframe_id = (k % 2) as u32;
        map.insert(s).unwrap();
    }
    map.remove(&BTreeSet::from([0, 1, 2, 7]));
    map.check_binding().unwrap();
    assert_eq!(map.len(), 36);
    assert_eq!(map.bound_to(&[0]).len() + map.bound_to(&[1]).len(), 36);
}

/// RMS distance from each map surfel to its nearest ground-truth surfel.
fn nearest_rms(map: &[Vec3], gt: &[Vec3]) -> f64 {
    let sum: f64 = map
        .iter()
        .map(|p| gt.iter().map(|g| (p - g).norm_squared()).fold(f64::INFINITY, f64::min))
        .sum();
    (sum / map.len() as f64).sqrt()
}

#[test]
fn loop_correction_moves_the_map_toward_ground_truth() {
    let o = oracle(200, NoiseModel::default());
    let out = run_tracking(&o, &TrackingConfig::default(), |_| Ok(())).unwrap();
    let mut map = GlobalSurfelMap::new();
    let grid_cfg = VoxelizationConfig::default();
    let intr = o.scene.intrinsics;
    for f in out.chained.frames.iter().step_by(10) {
        let kf = f.frame_id as u32;
        map.register_keyframe(kf, f.pose);
        let state = o.submap_state(f.submap_id, out.chained.frames.iter().find(|g| g.submap_id == f.submap_id).unwrap().frame_id.saturating_sub(usize::from(f.submap_id > 0)));
        let pred = o.predict_frame(f.frame_id, &state);
        let grid = SurfelGrid::from_prediction(&pred, intr.width, intr.height, kf, f.submap_id).unwrap();
        for s in adaptive_voxelize(&grid, &grid_cfg).unwrap() {
            map.insert(to_world(&s, &f.pose, kf)).unwrap();
        }
    }
    let gt: Vec<Vec3> = o.scene.surfels.iter().map(|s| s.mean).collect();
    let chained_positions = out.chained_positions(&o);
    let gt_positions: Vec<(f64, Vec3)> = (0..o.num_frames()).map(|f| (o.scene.timestamp(f), o.scene.pose(f).translation)).collect();
    let before_align = align_sim3(&chained_positions, &gt_positions).unwrap();
    let before: Vec<Vec3> = map.surfels.iter().map(|s| before_align.act(&s.mean)).collect();

    let old: BTreeMap<usize, Sim3> = out.chained.frames.iter().map(|f| (f.frame_id, f.pose)).collect();
    let deltas: BTreeMap<u32, Sim3> = pose_updates(&old, &out.graph)
        .into_iter()
        .filter(|u| map.keyframe_poses.contains_key(&(u.node as u32)))
        .map(|u| (u.node as u32, u.delta))
        .collect();
    map.loop_correct(&deltas).unwrap();
    let after_align = align_sim3(&out.positions(&o), &gt_positions).unwrap();
    let after: Vec<Vec3> = map.surfels.iter().map(|s| after_align.act(&s.mean)).collect();
    let (rb, ra) = (nearest_rms(&before, &gt), nearest_rms(&after, &gt));
    assert!(ra < rb, "corrected {ra} vs uncorrected {rb}");
}
