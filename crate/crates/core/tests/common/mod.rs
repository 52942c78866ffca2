//! Shared test helpers: seeded random generators and independent numeric oracles.
#![allow(dead_code)]

use nalgebra::{Matrix4, UnitQuaternion, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfel_slam::geometry::{Sim3, Sim3Tangent, Vec3};
use surfel_slam::raster::Surfel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec3(rng: &mut impl Rng, half_width: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
    )
}

/// Random rotation vector with norm below `max_angle`.
pub fn random_rotvec(rng: &mut impl Rng, max_angle: f64) -> Vec3 {
    loop {
        let v = random_vec3(rng, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n * rng.random_range(0.0..max_angle);
        }
    }
}

pub fn random_tangent(rng: &mut impl Rng, max_angle: f64) -> Sim3Tangent {
    Sim3Tangent::new(
        random_vec3(rng, 2.0),
        random_rotvec(rng, max_angle),
        rng.random_range(-1.0..1.0),
    )
}

pub fn random_sim3(rng: &mut impl Rng) -> Sim3 {
    Sim3::new(
        rng.random_range(0.2..3.0),
        UnitQuaternion::from_scaled_axis(random_rotvec(rng, 3.0)),
        random_vec3(rng, 3.0),
    )
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = a.abs().max();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Matrix4::identity();
    let mut sum = Matrix4::identity();
    for k in 1..30 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Matrix square root by the Denman-Beavers iteration.
fn sqrtm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let mut y = *a;
    let mut z = Matrix4::identity();
    for _ in 0..100 {
        let y_inv = y.try_inverse().expect("invertible");
        let z_inv = z.try_inverse().expect("invertible");
        let y_next = (y + z_inv) * 0.5;
        let z_next = (z + y_inv) * 0.5;
        let delta = (y_next - y).abs().max();
        y = y_next;
        z = z_next;
        if delta < 1e-16 {
            break;
        }
    }
    y
}

/// Principal matrix logarithm by inverse scaling and squaring.
pub fn logm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let mut x = *a;
    let mut roots = 0;
    while (x - Matrix4::identity()).abs().max() > 0.05 {
        x = sqrtm(&x);
        roots += 1;
        assert!(roots < 60);
    }
    let e = x - Matrix4::identity();
    let mut power = Matrix4::identity();
    let mut sum = Matrix4::zeros();
    for k in 1..80 {
        power *= e;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += power * (sign / k as f64);
    }
    sum * 2f64.powi(roots)
}

/// Random surfel in front of an identity camera.
pub fn random_surfel(rng: &mut impl Rng) -> Surfel {
    let mut s = Surfel::new(
        Vec3::new(
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.45..0.45),
            rng.random_range(1.0..3.0),
        ),
        UnitQuaternion::from_scaled_axis(Vec3::new(
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-3.0..3.0),
        )),
        Vector2::new(rng.random_range(0.03..0.15), rng.random_range(0.03..0.15)),
        rng.random_range(0.1..0.95),
        Vec3::new(rng.random(), rng.random(), rng.random()),
    );
    s.keyframe_id = 0;
    s
}

/// Default scene shortened to `frames` frames.
pub fn scene_config(frames: usize) -> surfel_slam::oracle::SceneConfig {
    surfel_slam::oracle::SceneConfig {
        num_frames: frames,
        ..Default::default()
    }
}

pub fn oracle(frames: usize, noise: surfel_slam::oracle::NoiseModel) -> surfel_slam::oracle::Oracle {
    let scene = surfel_slam::oracle::generate_scene(&scene_config(frames)).unwrap();
    surfel_slam::oracle::Oracle::new(scene, noise, Default::default()).unwrap()
}

pub fn scale_objective(s: f64, b: &[Vec3], a: &[Vec3]) -> f64 {
    b.iter().zip(a).map(|(b, a)| (b - a * s).norm_squared()).sum()
}

/// Dense log-spaced 1-D search over `[lo, hi]`, refined twice around the best sample.
pub fn grid_search_scale(b: &[Vec3], a: &[Vec3], lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo.ln(), hi.ln());
    let mut best = lo;
    for _ in 0..3 {
        let n = 4000;
        let step = (hi - lo) / n as f64;
        best = (0..=n)
            .map(|k| lo + step * k as f64)
            .min_by(|x, y| scale_objective(x.exp(), b, a).total_cmp(&scale_objective(y.exp(), b, a)))
            .unwrap();
        lo = best - 2.0 * step;
        hi = best + 2.0 * step;
    }
    best.exp()
}

/// `count` noisy correspondences with `b = scale * a + noise`, noise std `rel` of each norm.
pub fn noisy_scaled_points(rng: &mut impl Rng, count: usize, scale: f64, rel: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    use rand_distr::{Distribution, StandardNormal};
    let a: Vec<Vec3> = (0..count)
        .map(|_| random_vec3(rng, 1.0) + Vec3::new(0.0, 0.0, 2.0))
        .collect();
    let b = a
        .iter()
        .map(|p| {
            let n = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
            p * scale + n * (rel * (p * scale).norm())
        })
        .collect();
    (b, a)
}

/// Tangent vector of a 4x4 similarity logarithm `[[sigma I + [omega]x, rho], [0, 0]]`.
pub fn tangent_from_log(l: &Matrix4<f64>) -> Sim3Tangent {
    let sigma = (l[(0, 0)] + l[(1, 1)] + l[(2, 2)]) / 3.0;
    let omega = Vec3::new(l[(2, 1)] - l[(1, 2)], l[(0, 2)] - l[(2, 0)], l[(1, 0)] - l[(0, 1)]) * 0.5;
    Sim3Tangent::new(Vec3::new(l[(0, 3)], l[(1, 3)], l[(2, 3)]), omega, sigma)
}

/// Edge residual computed through dense matrix products and the matrix logarithm.
pub fn matrix_residual(h: &Sim3, from: &Sim3, to: &Sim3) -> Sim3Tangent {
    let m = h.to_matrix().try_inverse().unwrap() * from.to_matrix().try_inverse().unwrap() * to.to_matrix();
    tangent_from_log(&logm(&m))
}

fn perturb(rng: &mut impl Rng, m: Sim3) -> Sim3 {
    m.retract(&Sim3Tangent(random_tangent(rng, 1.0).0 * 0.05))
}

/// Chain of `n` nodes with noisy odometry and one noisy loop edge from the last node to the first.
pub fn drifted_graph(rng: &mut impl Rng, n: usize) -> surfel_slam::pose_graph::PoseGraph {
    use surfel_slam::pose_graph::{EdgeKind, PoseGraph, Sim3Constraint};
    let gt: Vec<Sim3> = (0..n)
        .map(|k| if k == 0 { Sim3::identity() } else { random_sim3(rng) })
        .collect();
    let mut graph = PoseGraph::new();
    let mut pose = Sim3::identity();
    graph.add_node(0, pose);
    let mut edges = Vec::new();
    for k in 1..n {
        let m = perturb(rng, gt[k - 1].inverse().compose(&gt[k]));
        pose = pose.compose(&m);
        graph.add_node(k, pose);
        edges.push(Sim3Constraint {
            from: k - 1,
            to: k,
            measurement: m,
            information: 1.0,
            kind: EdgeKind::Sequential,
        });
    }
    edges.push(Sim3Constraint {
        from: n - 1,
        to: 0,
        measurement: perturb(rng, gt[n - 1].inverse().compose(&gt[0])),
        information: 0.5,
        kind: EdgeKind::Loop,
    });
    for e in edges {
        graph.add_edge(e).unwrap();
    }
    graph.fix(0).unwrap();
    graph
}

fn perturbed_chi2(graph: &surfel_slam::pose_graph::PoseGraph, free: &[usize], x: &nalgebra::DVector<f64>) -> f64 {
    let mut g = graph.clone();
    for (k, id) in free.iter().enumerate() {
        let d = surfel_slam::geometry::Vector7::from_iterator(x.rows(7 * k, 7).iter().copied());
        let p = graph.nodes[id].retract(&Sim3Tangent(d));
        g.nodes.insert(*id, p);
    }
    g.chi2().unwrap()
}

/// Lowest chi2 found by quasi-Newton descent with numeric gradients from several random starts.
pub fn brute_force_chi2(graph: &surfel_slam::pose_graph::PoseGraph, restarts: usize, seed: u64) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let free: Vec<usize> = graph.nodes.keys().filter(|id| !graph.fixed.contains(id)).copied().collect();
    let dim = 7 * free.len();
    let f = |x: &DVector<f64>| perturbed_chi2(graph, &free, x);
    let grad = |x: &DVector<f64>| {
        let h = 1e-6;
        DVector::from_iterator(
            dim,
            (0..dim).map(|i| {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            }),
        )
    };
    let mut r = rng(seed);
    let mut best = f64::INFINITY;
    for restart in 0..restarts {
        let mut x = DVector::from_fn(dim, |_, _| if restart == 0 { 0.0 } else { r.random_range(-0.05..0.05) });
        let mut hinv = DMatrix::<f64>::identity(dim, dim);
        let mut fx = f(&x);
        let mut g = grad(&x);
        for _ in 0..3000 {
            if g.norm() < 1e-11 {
                break;
            }
            let mut p = -(&hinv * &g);
            if p.dot(&g) >= 0.0 {
                hinv = DMatrix::identity(dim, dim);
                p = -g.clone();
            }
            let mut step = 1.0;
            let mut next = &x + &p * step;
            let mut fn_ = f(&next);
            while fn_ > fx + 1e-4 * step * p.dot(&g) && step > 1e-16 {
                step *= 0.5;
                next = &x + &p * step;
                fn_ = f(&next);
            }
            if fn_ >= fx {
                break;
            }
            let gn = grad(&next);
            let s = &next - &x;
            let y = &gn - &g;
            let sy = s.dot(&y);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(dim, dim);
                let a = &i - &s * y.transpose() * rho;
                let b = &i - &y * s.transpose() * rho;
                hinv = &a * &hinv * &b + &s * s.transpose() * rho;
            }
            x = next;
            fx = fn_;
            g = gn;
        }
        best = best.min(fx);
    }
    best
}
