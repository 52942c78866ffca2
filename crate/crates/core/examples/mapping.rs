//! Voxelization, fusion, pruning and refinement on a few oracle keyframes.

use surfel_slam::evaluation::psnr;
use surfel_slam::geometry::Sim3;
use surfel_slam::oracle::{generate_scene, NoiseModel, Oracle, OracleConfig, SceneConfig};
use surfel_slam::mapping::{Mapper, MapperConfig};

fn main() -> surfel_slam::Result<()> {
    let scene = generate_scene(&SceneConfig::default())?;
    let oracle = Oracle::new(scene, NoiseModel::zero(1), OracleConfig::default())?;
    let intr = oracle.scene.intrinsics;
    let mut mapper = Mapper::new(MapperConfig::default(), Default::default(), intr);

    let state = oracle.submap_state(0, 0);
    for frame in [0usize, 2, 4, 6] {
        let pred = oracle.predict_frame(frame, &state);
        let pose: Sim3 = oracle.scene.pose(frame).to_sim3(1.0);
        mapper.integrate(frame as u32, 0, pose, &pred, oracle.view(frame).rgb.clone())?;
        let s = &mapper.stats;
        println!(
            "keyframe {frame}: {} candidates, {} after voxelization, {} inserted, {} pruned, map {}",
            s.candidates, s.voxelized, s.inserted, s.pruned, mapper.map.len()
        );
        if let Some(r) = &s.last_refine {
            let show = |p: Option<surfel_slam::evaluation::Psnr>| p.map_or("-".into(), |p| p.to_string());
            println!("  refine {} steps, psnr {} -> {}", r.accepted_steps, show(r.psnr_before), show(r.psnr_after));
        }
    }

    let rendered = surfel_slam::raster::render(&mapper.map.surfels, &oracle.scene.pose(3), &intr);
    println!("held-out frame 3 psnr {}", psnr(&rendered.color, &oracle.view(3).rgb)?);
    Ok(())
}
