//! Submap partitioning and chaining without loop closure.

use surfel_slam::evaluation::ate_rmse_sim3;
use surfel_slam::oracle::{generate_scene, NoiseModel, Oracle, OracleConfig, SceneConfig};
use surfel_slam::pipeline::{run_tracking, TrackingConfig};

fn main() -> surfel_slam::Result<()> {
    let scene = generate_scene(&SceneConfig::default())?;
    let gt: Vec<_> = (0..scene.num_frames()).map(|f| (scene.timestamp(f), scene.pose(f).translation)).collect();
    let oracle = Oracle::new(scene, NoiseModel::default(), OracleConfig::default())?;

    let cfg = TrackingConfig {
        disable_loop_closure: true,
        ..Default::default()
    };
    let out = run_tracking(&oracle, &cfg, |_| Ok(()))?;
    println!("{} submaps", out.num_submaps);
    for c in out.inter_submap.iter().take(5) {
        println!("submap {} -> {}: scale ratio {:.4}", c.from_submap, c.to_submap, c.scale_ratio);
    }
    println!("chained ATE {:.4}", ate_rmse_sim3(&out.positions(&oracle), &gt)?);
    Ok(())
}
