//! Loop detection, scale estimation and the resulting Sim(3) constraints.

use surfel_slam::evaluation::ate_rmse_sim3;
use surfel_slam::loop_closure::{constraints_to_text, estimate_scale};
use surfel_slam::oracle::{generate_scene, NoiseModel, Oracle, OracleConfig, SceneConfig};
use surfel_slam::pipeline::{run_tracking, TrackingConfig};

fn main() -> surfel_slam::Result<()> {
    let scene = generate_scene(&SceneConfig::default())?;
    let gt: Vec<_> = (0..scene.num_frames()).map(|f| (scene.timestamp(f), scene.pose(f).translation)).collect();
    let oracle = Oracle::new(scene, NoiseModel::default(), OracleConfig::default())?;

    // Same frame predicted in two contexts; the cloud ratio is the relative scale.
    let descriptor = oracle.describe_submap(0, &(0..8).collect::<Vec<_>>());
    let here = oracle.predict_frame(196, &oracle.submap_state(24, 192));
    let there = oracle.reinterpret_frame(196, &descriptor)?;
    let (b, a) = here.correspondences(&there);
    println!("frame 196: scale {:.4} from {} correspondences", estimate_scale(&b, &a)?, b.len());

    let out = run_tracking(&oracle, &TrackingConfig::default(), |_| Ok(()))?;
    println!("{} loops, {} rejected candidates", out.loops.len(), out.rejected_candidates);
    print!("{}", constraints_to_text(&out.loops[..out.loops.len().min(3)]));
    println!("ATE before {:.4}, after {:.4}", ate_rmse_sim3(&out.chained_positions(&oracle), &gt)?, ate_rmse_sim3(&out.positions(&oracle), &gt)?);
    Ok(())
}
