//! Levenberg-Marquardt on a small Sim(3) loop.

use nalgebra::UnitQuaternion;
use surfel_slam::geometry::{Sim3, Vec3};
use surfel_slam::pose_graph::{optimize, EdgeKind, PoseGraph, Sim3Constraint, SolverConfig};

fn main() -> surfel_slam::Result<()> {
    // Square path whose odometry slowly shrinks.
    let step = Sim3::new(1.0, UnitQuaternion::from_scaled_axis(Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)), Vec3::new(1.0, 0.0, 0.0));
    let drifted = Sim3 { scale: 0.97, ..step };
    let mut graph = PoseGraph::new();
    let mut pose = Sim3::identity();
    for k in 0..4 {
        graph.add_node(k, pose);
        pose = pose.compose(&drifted);
    }
    graph.fix(0)?;
    for k in 0..3 {
        graph.add_edge(Sim3Constraint {
            from: k,
            to: k + 1,
            measurement: drifted,
            information: 1.0,
            kind: EdgeKind::Sequential,
        })?;
    }
    graph.add_edge(Sim3Constraint {
        from: 3,
        to: 0,
        measurement: step,
        information: 1.0,
        kind: EdgeKind::Loop,
    })?;

    let report = optimize(&mut graph, &SolverConfig::default())?;
    println!("chi2 {:.3e} -> {:.3e} in {} steps", report.initial_chi2, report.final_chi2, report.iterations);
    for (id, p) in &graph.nodes {
        println!("node {id}: s {:.4} t {:?}", p.scale, p.translation.as_slice());
    }
    print!("{}", graph.to_text());
    Ok(())
}
