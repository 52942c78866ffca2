mod common;

use nalgebra::{Matrix2, UnitQuaternion, Vector2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use surfel_slam::geometry::{Se3Pose, Vec3};
use surfel_slam::raster::{
    grad_color_opacity, project_surfel, render, render_loss, CameraIntrinsics, GrayImage, LossWeights,
    Projection, Rasterizer, RenderTargets, RgbImage, Surfel,
};

use common::{random_surfel, random_vec3, rng};

fn small_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(25.0, 25.0, 15.5, 11.5, 32, 24).unwrap()
}

fn random_scene(r: &mut impl Rng, n: usize) -> Vec<Surfel> {
    (0..n).map(|_| random_surfel(r)).collect()
}

fn random_targets(r: &mut impl Rng, intr: &CameraIntrinsics) -> RenderTargets {
    let n = intr.num_pixels();
    RenderTargets {
        rgb: RgbImage {
            width: intr.width,
            height: intr.height,
            data: (0..n).map(|_| [r.random(), r.random(), r.random()]).collect(),
        },
        depth: GrayImage {
            width: intr.width,
            height: intr.height,
            data: (0..n).map(|_| r.random_range(0.5..3.5)).collect(),
        },
    }
}

#[test]
fn projected_covariance_matches_monte_carlo() {
    let mut r = rng(31);
    let intr = CameraIntrinsics::desk_scale();
    for _ in 0..10 {
        let surfel = Surfel::new(
            Vec3::new(r.random_range(-0.3..0.3), r.random_range(-0.2..0.2), r.random_range(1.5..3.0)),
            UnitQuaternion::from_scaled_axis(Vec3::new(
                r.random_range(-0.7..0.7),
                r.random_range(-0.7..0.7),
                r.random_range(-3.0..3.0),
            )),
            Vector2::new(r.random_range(0.003..0.01), r.random_range(0.003..0.01)),
            0.8,
            Vec3::new(1.0, 1.0, 1.0),
        );
        let Projection::Visible(fp) = project_surfel(&surfel, &Se3Pose::identity(), &intr) else {
            panic!("surfel in front of camera must project");
        };
        let (a, b) = surfel.tangent_axes();
        let n = 100_000;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = StandardNormal.sample(&mut r);
            let v: f64 = StandardNormal.sample(&mut r);
            let p = surfel.mean + a * u + b * v;
            let (px, py) = intr.project(&p);
            samples.push(Vector2::new(px, py));
        }
        let mean = samples.iter().sum::<Vector2<f64>>() / n as f64;
        let mut cov = Matrix2::zeros();
        for s in &samples {
            let d = s - mean;
            cov += d * d.transpose();
        }
        cov /= (n - 1) as f64;
        let scale = fp.covariance.trace();
        let err = (cov - fp.covariance).abs().max() / scale;
        assert!(err < 0.02, "relative covariance error {err}");
    }
}

#[test]
fn render_is_order_independent() {
    let mut r = rng(32);
    let intr = small_camera();
    for _ in 0..20 {
        let mut scene = random_scene(&mut r, 25);
        // Duplicate depths exercise the content tie-break.
        scene[3].mean.z = scene[7].mean.z;
        let reference = render(&scene, &Se3Pose::identity(), &intr);
        for _ in 0..3 {
            scene.shuffle(&mut r);
            let again = render(&scene, &Se3Pose::identity(), &intr);
            assert_eq!(reference, again);
        }
    }
}

#[test]
fn adding_surfels_never_reduces_accumulation() {
    let mut r = rng(33);
    let intr = small_camera();
    for _ in 0..20 {
        let mut scene = random_scene(&mut r, 10);
        let mut previous = render(&scene, &Se3Pose::identity(), &intr).accumulation;
        for _ in 0..10 {
            scene.push(random_surfel(&mut r));
            let next = render(&scene, &Se3Pose::identity(), &intr).accumulation;
            for (a, b) in previous.data.iter().zip(&next.data) {
                // Early termination can stop at most a transmittance of 1e-4 short.
                assert!(*b >= a - 1e-4, "{a} -> {b}");
            }
            previous = next;
        }
    }
}

#[test]
fn opaque_occluder_hides_everything_behind() {
    let mut r = rng(34);
    let intr = small_camera();
    let (cx, cy) = (15usize, 11usize);
    let center = intr.unproject(cx as f64, cy as f64, 0.8);
    let occluder = Surfel::isotropic(center, 0.05, 1.0, Vec3::new(0.2, 0.4, 0.6));
    let idx = cy * intr.width + cx;
    for _ in 0..20 {
        let mut scene = random_scene(&mut r, 15);
        scene.push(occluder);
        let out = render(&scene, &Se3Pose::identity(), &intr);
        let c = out.color.data[idx];
        assert!((c[0] - 0.2).abs() < 1e-12 && (c[1] - 0.4).abs() < 1e-12 && (c[2] - 0.6).abs() < 1e-12);
        assert!((out.accumulation.data[idx] - 1.0).abs() < 1e-12);
        assert!((out.depth.data[idx] - 0.8).abs() < 1e-12);
    }
}

#[test]
fn composite_is_bounded_by_inputs() {
    let mut r = rng(35);
    let intr = small_camera();
    for _ in 0..20 {
        let scene = random_scene(&mut r, 30);
        let max_c = scene.iter().fold(0.0f64, |m, s| m.max(s.color.max()));
        let (z_lo, z_hi) = scene
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.mean.z), hi.max(s.mean.z)));
        let out = render(&scene, &Se3Pose::identity(), &intr);
        for p in 0..intr.num_pixels() {
            let a = out.accumulation.data[p];
            assert!((0.0..=1.0 + 1e-12).contains(&a));
            for k in 0..3 {
                let c = out.color.data[p][k];
                assert!(c >= 0.0 && c <= max_c * a + 1e-12);
            }
            if a > 1e-9 {
                let z = out.depth.data[p] / a;
                assert!(z >= z_lo - 1e-9 && z <= z_hi + 1e-9);
            }
        }
    }
}

#[test]
fn camera_motion_is_equivalent_to_moving_the_scene() {
    let mut r = rng(36);
    let intr = small_camera();
    for _ in 0..10 {
        let scene = random_scene(&mut r, 20);
        let pose = Se3Pose::new(
            UnitQuaternion::from_scaled_axis(random_vec3(&mut r, 0.1)),
            random_vec3(&mut r, 0.1),
        );
        let inv = pose.inverse();
        let moved: Vec<Surfel> = scene
            .iter()
            .map(|s| {
                let mut m = *s;
                m.mean = inv.act(&s.mean);
                m.rotation = inv.rotation * s.rotation;
                m
            })
            .collect();
        let a = render(&scene, &pose, &intr);
        let b = render(&moved, &Se3Pose::identity(), &intr);
        for (x, y) in a.accumulation.data.iter().zip(&b.accumulation.data) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn loss_matches_naive_loop() {
    let mut r = rng(37);
    let intr = small_camera();
    for _ in 0..10 {
        let scene = random_scene(&mut r, 20);
        let targets = random_targets(&mut r, &intr);
        let out = render(&scene, &Se3Pose::identity(), &intr);
        let weights = LossWeights { mse: 0.7, depth: 0.3 };
        let loss = render_loss(&out, &targets.rgb, &targets.depth, weights).unwrap();

        let mut sq = 0.0;
        let mut dsq = 0.0;
        let mut count = 0.0;
        for y in 0..intr.height {
            for x in 0..intr.width {
                let rendered = out.color.get(x, y);
                let target = targets.rgb.get(x, y);
                for k in 0..3 {
                    sq += (rendered[k] - target[k]).powi(2);
                }
                if out.accumulation.get(x, y) > 0.5 {
                    dsq += (out.depth.get(x, y) - targets.depth.get(x, y)).powi(2);
                    count += 1.0;
                }
            }
        }
        let naive = 0.7 * sq / (3 * intr.num_pixels()) as f64 + if count > 0.0 { 0.3 * dsq / count } else { 0.0 };
        assert!((loss - naive).abs() < 1e-12 * (1.0 + naive));
    }
}

#[test]
fn loss_rejects_mismatched_targets() {
    let intr = small_camera();
    let out = render(&[], &Se3Pose::identity(), &intr);
    let rgb = RgbImage::new(10, 10);
    let depth = GrayImage::new(intr.width, intr.height);
    assert!(render_loss(&out, &rgb, &depth, LossWeights::default()).is_err());
}

fn loss_of(scene: &[Surfel], intr: &CameraIntrinsics, targets: &RenderTargets, weights: LossWeights) -> f64 {
    let out = render(scene, &Se3Pose::identity(), intr);
    render_loss(&out, &targets.rgb, &targets.depth, weights).unwrap()
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    let rel = (analytic - numeric).abs() / denom;
    assert!(rel < 1e-4, "{what}: analytic {analytic} numeric {numeric} rel {rel}");
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let h = 1e-4;
    let intr = small_camera();
    let weights = LossWeights::default();
    let rasterizer = Rasterizer::default();
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let scene = random_scene(&mut r, 12);
        let targets = random_targets(&mut r, &intr);
        let grads = grad_color_opacity(&rasterizer, &scene, &Se3Pose::identity(), &intr, &targets, weights).unwrap();
        assert_eq!(grads.gradients.len(), scene.len());
        for i in 0..scene.len() {
            for k in 0..3 {
                let mut plus = scene.clone();
                plus[i].color[k] += h;
                let mut minus = scene.clone();
                minus[i].color[k] -= h;
                let fd = (loss_of(&plus, &intr, &targets, weights) - loss_of(&minus, &intr, &targets, weights)) / (2.0 * h);
                assert_close(grads.gradients[i].color[k], fd, "color");
            }
            let mut plus = scene.clone();
            plus[i].opacity += h;
            let mut minus = scene.clone();
            minus[i].opacity -= h;
            let fd = (loss_of(&plus, &intr, &targets, weights) - loss_of(&minus, &intr, &targets, weights)) / (2.0 * h);
            assert_close(grads.gradients[i].opacity, fd, "opacity");
        }
    }
}

#[test]
fn gradients_vanish_at_a_perfect_fit() {
    let mut r = rng(38);
    let intr = small_camera();
    let scene = random_scene(&mut r, 15);
    let out = render(&scene, &Se3Pose::identity(), &intr);
    let targets = RenderTargets {
        rgb: out.color.clone(),
        depth: out.depth.clone(),
    };
    let grads = grad_color_opacity(
        &Rasterizer::default(),
        &scene,
        &Se3Pose::identity(),
        &intr,
        &targets,
        LossWeights::default(),
    )
    .unwrap();
    assert_eq!(grads.loss, 0.0);
    for g in &grads.gradients {
        assert!(g.color.norm() < 1e-15 && g.opacity.abs() < 1e-15);
    }
}

#[test]
fn color_gradient_channels_are_separable() {
    let mut r = rng(39);
    let intr = small_camera();
    let scene = random_scene(&mut r, 15);
    let targets = random_targets(&mut r, &intr);
    let weights = LossWeights { mse: 1.0, depth: 0.0 };
    let rast = Rasterizer::default();
    let base = grad_color_opacity(&rast, &scene, &Se3Pose::identity(), &intr, &targets, weights).unwrap();
    let mut altered = targets.clone();
    for px in &mut altered.rgb.data {
        px[1] = 1.0 - px[1];
    }
    let other = grad_color_opacity(&rast, &scene, &Se3Pose::identity(), &intr, &altered, weights).unwrap();
    for (a, b) in base.gradients.iter().zip(&other.gradients) {
        assert_eq!(a.color.x, b.color.x);
        assert_eq!(a.color.z, b.color.z);
    }
}
