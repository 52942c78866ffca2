//! Sim(3) composition, exp/log and Umeyama alignment.

use nalgebra::UnitQuaternion;
use surfel_slam::geometry::{umeyama_sim3, Sim3, Sim3Tangent, Vec3};

fn main() -> surfel_slam::Result<()> {
    let a = Sim3::new(1.5, UnitQuaternion::from_scaled_axis(Vec3::new(0.0, 0.0, 0.4)), Vec3::new(1.0, 0.0, 0.5));
    let b = Sim3::exp(&Sim3Tangent::new(Vec3::new(0.1, -0.2, 0.0), Vec3::new(0.0, 0.3, 0.0), 0.05));

    let ab = a.compose(&b);
    let p = Vec3::new(0.2, 0.3, 1.0);
    println!("a(b(p)) = {:?}", a.act(&b.act(&p)).as_slice());
    println!("(ab)(p) = {:?}", ab.act(&p).as_slice());

    let xi = ab.log()?;
    println!("log(ab) = {:?}", xi.0.as_slice());
    println!("exp(log(ab)) drift = {:.2e}", (Sim3::exp(&xi).to_matrix() - ab.to_matrix()).abs().max());

    let src: Vec<Vec3> = (0..10).map(|k| Vec3::new(k as f64, (k * k) as f64 * 0.1, 1.0)).collect();
    let dst: Vec<Vec3> = src.iter().map(|q| a.act(q)).collect();
    let est = umeyama_sim3(&src, &dst)?;
    println!("umeyama scale {:.6} (true {:.6})", est.scale, a.scale);
    Ok(())
}
