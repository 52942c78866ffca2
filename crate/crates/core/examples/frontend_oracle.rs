//! The simulated frontend: predictions, scale drift and relocalization.

use surfel_slam::oracle::{generate_scene, NoiseModel, Oracle, OracleConfig, SceneConfig};

fn main() -> surfel_slam::Result<()> {
    let scene = generate_scene(&SceneConfig::default())?;
    println!("{} scene surfels, {} frames", scene.surfels.len(), scene.num_frames());
    let oracle = Oracle::new(scene, NoiseModel::default(), OracleConfig::default())?;

    let first = oracle.submap_state(0, 0);
    let pred = oracle.predict_frame(5, &first);
    println!("frame 5: {} points, pose t = {:?}", pred.points_cam.len(), pred.pose_in_submap.translation.as_slice());

    let later = oracle.submap_state(3, 21);
    println!("submap 3 scale state {:.4}", later.scale_state);

    let frames: Vec<usize> = (0..8).collect();
    let descriptor = oracle.describe_submap(0, &frames);
    let reloc = oracle.reinterpret_frame(6, &descriptor)?;
    println!("frame 6 relocalized in submap 0 with {} points", reloc.points_cam.len());
    println!("covisibility(0, 199) = {:.2}", oracle.covisibility(0, 199));
    Ok(())
}
