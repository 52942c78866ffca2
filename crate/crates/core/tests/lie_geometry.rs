mod common;

use approx::assert_relative_eq;
use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector4};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use surfel_slam::geometry::{canonicalize, umeyama_sim3, Sim3, Sim3Tangent, Vec3};

use common::{expm, logm, random_sim3, random_tangent, random_vec3, rng};

fn max_abs(m: &Matrix4<f64>) -> f64 {
    m.abs().max()
}

#[test]
fn composition_matches_sequential_action() {
    let mut r = rng(11);
    for _ in 0..100 {
        let a = random_sim3(&mut r);
        let b = random_sim3(&mut r);
        let ab = a.compose(&b);
        for _ in 0..100 {
            let p = random_vec3(&mut r, 5.0);
            let direct = a.act(&b.act(&p));
            assert!((ab.act(&p) - direct).norm() < 1e-12 * (1.0 + direct.norm()));
        }
    }
}

#[test]
fn group_axioms_on_random_samples() {
    let mut r = rng(12);
    for _ in 0..1000 {
        let (a, b, c) = (random_sim3(&mut r), random_sim3(&mut r), random_sim3(&mut r));
        let left = a.compose(&b).compose(&c).to_matrix();
        let right = a.compose(&b.compose(&c)).to_matrix();
        assert!(max_abs(&(left - right)) < 1e-9);
        let id = a.inverse().compose(&a).to_matrix();
        assert!(max_abs(&(id - Matrix4::identity())) < 1e-9);
        let id = a.compose(&a.inverse()).to_matrix();
        assert!(max_abs(&(id - Matrix4::identity())) < 1e-9);
        assert_relative_eq!(a.inverse().scale, 1.0 / a.scale, max_relative = 1e-15);
        assert!((a.compose(&b).rotation.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn exp_log_roundtrip() {
    let mut r = rng(13);
    for _ in 0..1000 {
        let v = random_tangent(&mut r, 3.0);
        let t = Sim3::exp(&v);
        let back = t.log().unwrap();
        assert!((back.0 - v.0).norm() < 1e-9, "{v:?} -> {back:?}");
        let again = Sim3::exp(&back);
        assert!(max_abs(&(again.to_matrix() - t.to_matrix())) < 1e-9);
    }
}

#[test]
fn exp_log_roundtrip_near_singular_branches() {
    let mut r = rng(14);
    for &(angle, sigma) in &[(0.0, 0.0), (1e-7, 0.0), (1e-7, 1e-7), (5e-6, -2e-6), (1e-4, 1e-8), (0.5, 1e-9)] {
        for _ in 0..50 {
            let axis = random_vec3(&mut r, 1.0).normalize();
            let v = Sim3Tangent::new(random_vec3(&mut r, 1.0), axis * angle, sigma);
            let back = Sim3::exp(&v).log().unwrap();
            assert!((back.0 - v.0).norm() < 1e-9);
        }
    }
}

#[test]
fn log_matches_matrix_logarithm() {
    let mut r = rng(15);
    for _ in 0..200 {
        let t = random_sim3(&mut r);
        let oracle = logm(&t.to_matrix());
        let hat = t.log().unwrap().hat();
        assert!(max_abs(&(oracle - hat)) < 1e-9, "{}", max_abs(&(oracle - hat)));
    }
}

#[test]
fn exp_matches_matrix_exponential() {
    let mut r = rng(16);
    for _ in 0..200 {
        let v = random_tangent(&mut r, 3.0);
        let oracle = expm(&v.hat());
        assert!(max_abs(&(oracle - Sim3::exp(&v).to_matrix())) < 1e-9);
    }
}

#[test]
fn exp_is_first_order_identity_plus_hat() {
    let mut r = rng(17);
    for _ in 0..50 {
        let v = random_tangent(&mut r, 1.0);
        let mut prev_err = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let scaled = Sim3Tangent(v.0 * eps);
            let fd = (Sim3::exp(&scaled).to_matrix() - Matrix4::identity()) / eps;
            let err = max_abs(&(fd - v.hat()));
            // First-order remainder shrinks linearly with the step.
            assert!(err < 10.0 * eps * (1.0 + v.norm()).powi(2));
            assert!(err < prev_err);
            prev_err = err;
        }
    }
}

#[test]
fn action_matrix_form_matches_quaternion_form() {
    let mut r = rng(18);
    for _ in 0..1000 {
        let t = random_sim3(&mut r);
        let p = random_vec3(&mut r, 4.0);
        let m = t.to_matrix() * Vector4::new(p.x, p.y, p.z, 1.0);
        let q = t.act(&p);
        assert!((Vec3::new(m.x, m.y, m.z) - q).norm() < 1e-12 * (1.0 + q.norm()));
    }
}

#[test]
fn matrix_roundtrip() {
    let mut r = rng(19);
    for _ in 0..200 {
        let t = random_sim3(&mut r);
        let back = Sim3::from_matrix(&t.to_matrix()).unwrap();
        assert!(max_abs(&(back.to_matrix() - t.to_matrix())) < 1e-12);
    }
}

#[test]
fn umeyama_exact_on_noise_free_correspondences() {
    let mut r = rng(20);
    for _ in 0..1000 {
        let truth = random_sim3(&mut r);
        let n = r.random_range(3..30);
        let src: Vec<Vec3> = (0..n).map(|_| random_vec3(&mut r, 2.0)).collect();
        let dst: Vec<Vec3> = src.iter().map(|p| truth.act(p)).collect();
        let est = umeyama_sim3(&src, &dst).unwrap();
        let residual: f64 = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| (est.act(s) - d).norm_squared())
            .sum();
        assert!(residual < 1e-9, "residual {residual}");
        assert!(max_abs(&(est.to_matrix() - truth.to_matrix())) < 1e-9);
    }
}

fn sum_sq(t: &Sim3, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter().zip(dst).map(|(s, d)| (t.act(s) - d).norm_squared()).sum()
}

#[test]
fn umeyama_noisy_beats_grid_search_near_truth() {
    let mut r = rng(21);
    let noise = Normal::new(0.0, 0.05).unwrap();
    for _ in 0..5 {
        let truth = random_sim3(&mut r);
        let src: Vec<Vec3> = (0..40).map(|_| random_vec3(&mut r, 2.0)).collect();
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| truth.act(p) + Vec3::new(noise.sample(&mut r), noise.sample(&mut r), noise.sample(&mut r)))
            .collect();
        let est = umeyama_sim3(&src, &dst).unwrap();
        let best_closed = sum_sq(&est, &src, &dst);

        // Grid over scale and a rotation perturbation; translation solved in closed form.
        let n = src.len() as f64;
        let ms = src.iter().sum::<Vec3>() / n;
        let md = dst.iter().sum::<Vec3>() / n;
        let mut best_grid = f64::INFINITY;
        let steps: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.02).collect();
        for ds in &steps {
            let s = truth.scale * (1.0 + ds);
            for ax in &steps {
                for ay in &steps {
                    for az in &steps {
                        let q = UnitQuaternion::from_scaled_axis(Vec3::new(*ax, *ay, *az)) * truth.rotation;
                        let t = md - q * ms * s;
                        let cand = Sim3::new(s, q, t);
                        best_grid = best_grid.min(sum_sq(&cand, &src, &dst));
                    }
                }
            }
        }
        assert!(best_closed <= best_grid + 1e-12, "{best_closed} > {best_grid}");
    }
}

proptest! {
    #[test]
    fn canonicalization_is_sign_invariant(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let raw = Quaternion::new(w, x, y, z);
        prop_assume!(raw.norm() > 1e-6);
        let q = UnitQuaternion::from_quaternion(raw);
        let neg = UnitQuaternion::new_unchecked(-*q.quaternion());
        let a = canonicalize(&q).quaternion().coords;
        let b = canonicalize(&neg).quaternion().coords;
        for i in 0..4 {
            prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
        }
        prop_assert!(a.w >= 0.0);
        prop_assert!((canonicalize(&q).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exp_log_roundtrip_prop(rx in -2.0f64..2.0, ry in -2.0f64..2.0, rz in -2.0f64..2.0,
                              wx in -1.7f64..1.7, wy in -1.7f64..1.7, wz in -1.7f64..1.7,
                              sigma in -2.0f64..2.0) {
        let v = Sim3Tangent::new(Vec3::new(rx, ry, rz), Vec3::new(wx, wy, wz), sigma);
        prop_assume!(v.omega().norm() < 3.0);
        let back = Sim3::exp(&v).log().unwrap();
        prop_assert!((back.0 - v.0).norm() < 1e-9);
    }
}
