//! Subcommand implementations shared by the binary and the examples.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{align_sim3, DepthAlignment, ate_rmse_sim3, depth_l1_scale_aligned, mean_psnr, psnr, ssim, Psnr};
use crate::geometry::{Sim3, Vec3};
use crate::io::{
    create_dir, format_kv, frame_file, quantize_rgb, read_depth_png, read_intrinsics, read_ply, read_rgb_png,
    read_scene_dir, read_text, read_tum, write_depth_png, write_ply, write_report, write_rgb_png, write_scene_dir,
    write_text, write_tum, ReportRow, DEFAULT_DEPTH_SCALE, INTRINSICS_FILE, TRAJECTORY_GT_FILE,
};
use crate::oracle::{generate_scene, Oracle, VALID_ACCUMULATION};
use crate::pipeline::{run_pipeline, RunOutput};
use crate::pose_graph::{optimize, PoseGraph, SolveReport, SolverConfig};
use crate::raster::{CameraIntrinsics, GrayImage, Rasterizer, RenderBuffers, RenderConfig, RgbImage, Surfel};

pub const PRE_PGO_FILE: &str = "trajectory_pre_pgo.txt";
pub const POST_PGO_FILE: &str = "trajectory_post_pgo.txt";
pub const MAP_FILE: &str = "map.ply";
pub const CONSTRAINTS_FILE: &str = "constraints.txt";
pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.txt";

/// Generates a synthetic scene and writes it as a scene directory.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Oracle> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    let oracle = Oracle::new(scene, cfg.noise, cfg.oracle)?;
    write_scene_dir(out, &oracle, cfg)?;
    Ok(oracle)
}

/// Image metrics of a set of rendered views against reference images.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ViewMetrics {
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
    pub depth_l1: Option<f64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub config: RunConfig,
    pub output: RunOutput,
    pub ate_rmse: f64,
    pub ate_rmse_pre_pgo: f64,
    pub map: ViewMetrics,
    /// Ground-truth scene re-rendered at the aligned estimated poses, quantized
    /// like the stored images.
    pub gt_view_psnr: Option<Psnr>,
    pub report: ReportRow,
}

fn scene_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

/// Averages view metrics; views whose depth mask is empty are skipped for depth L1.
fn average_views(psnrs: &[Psnr], ssims: &[f64], depths: &[f64]) -> ViewMetrics {
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    ViewMetrics {
        psnr: mean_psnr(psnrs),
        ssim: mean(ssims),
        depth_l1: mean(depths),
    }
}

fn render_sim3(rasterizer: &Rasterizer, surfels: &[Surfel], pose: &Sim3, intr: &CameraIntrinsics) -> RenderBuffers {
    let mut buffers = rasterizer.render(surfels, &pose.to_se3(), intr).buffers;
    for d in &mut buffers.depth.data {
        *d /= pose.scale;
    }
    buffers
}

/// Runs the full pipeline on a scene directory and writes every artifact to `out`.
///
/// `overrides` are `key=value` settings applied on top of the configuration
/// stored with the scene.
pub fn cmd_run(scene_dir: &Path, overrides: &[(String, String)], out: &Path) -> Result<RunSummary> {
    let loaded = read_scene_dir(scene_dir)?;
    let mut cfg = loaded.config.clone();
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    let oracle = Oracle::new(loaded.scene.clone(), cfg.noise, cfg.oracle)?;
    let output = run_pipeline(&oracle, &cfg)?;
    create_dir(out)?;

    let scene = &oracle.scene;
    let pre: Vec<(f64, Sim3)> = output
        .tracking
        .chained
        .frames
        .iter()
        .map(|f| (scene.timestamp(f.frame_id), f.pose))
        .collect();
    let post: Vec<(f64, Sim3)> = output
        .tracking
        .optimized
        .iter()
        .map(|(f, p)| (scene.timestamp(*f), *p))
        .collect();
    write_tum(&out.join(PRE_PGO_FILE), &pre, cfg.sim3_trajectories)?;
    write_tum(&out.join(POST_PGO_FILE), &post, cfg.sim3_trajectories)?;
    write_text(&out.join(CONSTRAINTS_FILE), &output.tracking.graph.to_text())?;
    write_text(&out.join(MANIFEST_FILE), &cfg.to_text())?;

    let gt: Vec<(f64, Vec3)> = (0..scene.num_frames())
        .map(|f| (scene.timestamp(f), scene.pose(f).translation))
        .collect();
    let positions = |track: &[(f64, Sim3)]| -> Vec<(f64, Vec3)> { track.iter().map(|(t, p)| (*t, p.translation)).collect() };
    let ate_rmse = ate_rmse_sim3(&positions(&post), &gt)?;
    let ate_rmse_pre_pgo = ate_rmse_sim3(&positions(&pre), &gt)?;

    let rasterizer = Rasterizer::new(cfg.render);
    let intr = scene.intrinsics;
    let alignment = align_sim3(&positions(&post), &gt)?;
    let mut gt_psnrs = Vec::new();
    let (mut psnrs, mut ssims, mut depths) = (Vec::new(), Vec::new(), Vec::new());
    for (&frame, pose) in &output.tracking.optimized {
        let rgb = read_rgb_png(&frame_file(scene_dir, "rgb", frame, "png"))?;
        let aligned = alignment.compose(pose);
        let gt_view = rasterizer.render(&scene.surfels, &aligned.to_se3(), &intr).buffers;
        gt_psnrs.push(psnr(&quantize_rgb(&gt_view.color), &rgb)?);
        if let Some(mapper) = &output.mapper {
            let depth = read_depth_png(&frame_file(scene_dir, "depth", frame, "png"), loaded.depth_scale)?;
            let view = render_sim3(&rasterizer, &mapper.map.surfels, pose, &intr);
            psnrs.push(psnr(&view.color, &rgb)?);
            ssims.push(ssim(&view.color, &rgb)?);
            if let Ok(l1) = depth_l1_scale_aligned(&view.depth, &depth, &view.accumulation, cfg.depth_alignment) {
                depths.push(l1);
            }
        }
    }
    let map = average_views(&psnrs, &ssims, &depths);
    let gt_view_psnr = mean_psnr(&gt_psnrs);

    if let Some(mapper) = &output.mapper {
        write_ply(&out.join(MAP_FILE), &mapper.map.surfels)?;
    }
    let fps = cfg
        .timing
        .then(|| scene.num_frames() as f64 / output.elapsed.as_secs_f64().max(1e-9));
    let report = ReportRow {
        scene: scene_name(scene_dir),
        seed: cfg.noise.rng_seed,
        ate_rmse: Some(ate_rmse),
        psnr: map.psnr,
        ssim: map.ssim,
        depth_l1: map.depth_l1,
        num_surfels: output.mapper.as_ref().map(|m| m.map.len()),
        fps,
    };
    write_report(&out.join(REPORT_FILE), std::slice::from_ref(&report))?;

    let opt = |v: Option<String>| v.unwrap_or_else(|| "null".into());
    let metrics = [
        ("ate_rmse", ate_rmse.to_string()),
        ("ate_rmse_pre_pgo", ate_rmse_pre_pgo.to_string()),
        ("map_psnr", opt(map.psnr.map(|p| p.to_string()))),
        ("map_ssim", opt(map.ssim.map(|v| v.to_string()))),
        ("map_depth_l1", opt(map.depth_l1.map(|v| v.to_string()))),
        ("gt_view_psnr", opt(gt_view_psnr.map(|p| p.to_string()))),
        ("num_submaps", output.tracking.num_submaps.to_string()),
        ("loop_constraints", output.tracking.loops.len().to_string()),
        ("rejected_candidates", output.tracking.rejected_candidates.to_string()),
        ("pgo_solves", output.tracking.solves.len().to_string()),
    ];
    write_text(&out.join(METRICS_FILE), &format_kv(&metrics))?;

    Ok(RunSummary {
        config: cfg,
        output,
        ate_rmse,
        ate_rmse_pre_pgo,
        map,
        gt_view_psnr,
        report,
    })
}

/// Inputs of [`cmd_evaluate`]. Image metrics need both `renders` and `scene`.
#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub trajectory: PathBuf,
    /// Defaults to the scene directory's ground truth.
    pub ground_truth: Option<PathBuf>,
    /// Directory with `rgb/` and `depth/` written by [`cmd_render`].
    pub renders: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub report: PathBuf,
    pub seed: u64,
    pub depth_alignment: DepthAlignment,
}

/// Scores a trajectory, and optionally rendered images, against ground truth.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<ReportRow> {
    let gt_path = match (&args.ground_truth, &args.scene) {
        (Some(p), _) => p.clone(),
        (None, Some(scene)) => scene.join(TRAJECTORY_GT_FILE),
        (None, None) => return Err(Error::Config("evaluate needs a ground-truth trajectory or a scene".into())),
    };
    let to_positions = |v: Vec<(f64, Sim3)>| -> Vec<(f64, Vec3)> { v.into_iter().map(|(t, p)| (t, p.translation)).collect() };
    let estimate = to_positions(read_tum(&args.trajectory)?);
    let gt = to_positions(read_tum(&gt_path)?);
    let ate = ate_rmse_sim3(&estimate, &gt)?;

    let mut metrics = ViewMetrics::default();
    if let (Some(renders), Some(scene)) = (&args.renders, &args.scene) {
        let (_, depth_scale) = read_intrinsics(&scene.join(INTRINSICS_FILE))?;
        let (mut psnrs, mut ssims, mut depths) = (Vec::new(), Vec::new(), Vec::new());
        for frame in 0.. {
            let rendered_rgb = frame_file(renders, "rgb", frame, "png");
            if !rendered_rgb.exists() {
                break;
            }
            let rendered = read_rgb_png(&rendered_rgb)?;
            let target = read_rgb_png(&frame_file(scene, "rgb", frame, "png"))?;
            psnrs.push(psnr(&rendered, &target)?);
            ssims.push(ssim(&rendered, &target)?);
            let depth_file = frame_file(renders, "depth", frame, "png");
            if depth_file.exists() {
                let rendered_depth = read_depth_png(&depth_file, DEFAULT_DEPTH_SCALE)?;
                let gt_depth = read_depth_png(&frame_file(scene, "depth", frame, "png"), depth_scale)?;
                // Rendered depth is written as zero where coverage is too low.
                let coverage = GrayImage {
                    width: rendered_depth.width,
                    height: rendered_depth.height,
                    data: rendered_depth.data.iter().map(|d| if *d > 0.0 { 1.0 } else { 0.0 }).collect(),
                };
                if let Ok(l1) = depth_l1_scale_aligned(&rendered_depth, &gt_depth, &coverage, args.depth_alignment) {
                    depths.push(l1);
                }
            }
        }
        metrics = average_views(&psnrs, &ssims, &depths);
    }
    let row = ReportRow {
        scene: args.scene.as_deref().map_or_else(|| "trajectory".into(), scene_name),
        seed: args.seed,
        ate_rmse: Some(ate),
        psnr: metrics.psnr,
        ssim: metrics.ssim,
        depth_l1: metrics.depth_l1,
        num_surfels: None,
        fps: None,
    };
    write_report(&args.report, std::slice::from_ref(&row))?;
    Ok(row)
}

/// Renders a PLY map at every pose of a TUM file into `out/rgb` and `out/depth`.
///
/// Depth is zero wherever accumulation is at most one half. Returns the number
/// of frames written.
pub fn cmd_render(map: &Path, poses: &Path, intrinsics: &Path, out: &Path) -> Result<usize> {
    let surfels = read_ply(map)?;
    let poses = read_tum(poses)?;
    let (intr, _) = read_intrinsics(intrinsics)?;
    let rasterizer = Rasterizer::new(RenderConfig::default());
    create_dir(&out.join("rgb"))?;
    create_dir(&out.join("depth"))?;
    for (k, (_, pose)) in poses.iter().enumerate() {
        let view = render_view(&rasterizer, &surfels, pose, &intr);
        write_rgb_png(&frame_file(out, "rgb", k, "png"), &view.0)?;
        write_depth_png(&frame_file(out, "depth", k, "png"), &view.1, DEFAULT_DEPTH_SCALE)?;
    }
    Ok(poses.len())
}

/// Color and masked depth of one view.
pub fn render_view(rasterizer: &Rasterizer, surfels: &[Surfel], pose: &Sim3, intr: &CameraIntrinsics) -> (RgbImage, GrayImage) {
    let mut b = render_sim3(rasterizer, surfels, pose, intr);
    for (d, a) in b.depth.data.iter_mut().zip(&b.accumulation.data) {
        if *a <= VALID_ACCUMULATION {
            *d = 0.0;
        }
    }
    (b.color, b.depth)
}

/// Solves a pose graph text file and writes the optimized graph.
pub fn cmd_optimize_graph(input: &Path, output: &Path, solver: &SolverConfig) -> Result<SolveReport> {
    let mut graph = PoseGraph::from_text(&read_text(input)?)?;
    let report = optimize(&mut graph, solver)?;
    write_text(output, &graph.to_text())?;
    Ok(report)
}
