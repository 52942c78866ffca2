use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surfel_slam::commands::{cmd_evaluate, cmd_optimize_graph, cmd_render, cmd_run, cmd_simulate, EvaluateArgs};
use surfel_slam::config::RunConfig;
use surfel_slam::{Error, Result};

#[derive(Parser)]
#[command(name = "surfel-slam", version, about = "Surfel SLAM backend on a simulated frontend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long = "disable_loop_closure")]
    disable_loop_closure: bool,
    #[arg(long = "disable_voxelization")]
    disable_voxelization: bool,
    #[arg(long = "disable_refine")]
    disable_refine: bool,
}

impl Overrides {
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            out.extend(surfel_slam::io::parse_kv(&text)?);
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (flag, key) in [
            (self.disable_loop_closure, "disable_loop_closure"),
            (self.disable_voxelization, "disable_voxelization"),
            (self.disable_refine, "disable_refine"),
        ] {
            if flag {
                out.push((key.to_string(), "true".to_string()));
            }
        }
        Ok(out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run tracking, loop closure and mapping on a scene directory.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a trajectory and optional renders against ground truth.
    Evaluate {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        renders: Option<PathBuf>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "median_ratio")]
        depth_alignment: String,
    },
    /// Render a PLY map at the poses of a TUM trajectory.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a VERTEX_SIM3 / EDGE_SIM3 pose graph file.
    OptimizeGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn config_from(overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in overrides.pairs()? {
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { out, overrides } => {
            let cfg = config_from(&overrides)?;
            let oracle = cmd_simulate(&cfg, &out)?;
            println!("wrote {} frames to {}", oracle.num_frames(), out.display());
        }
        Command::Run { scene, out, overrides } => {
            let summary = cmd_run(&scene, &overrides.pairs()?, &out)?;
            println!(
                "ate_rmse {:.6} (pre-pgo {:.6}), loops {}, surfels {}",
                summary.ate_rmse,
                summary.ate_rmse_pre_pgo,
                summary.output.tracking.loops.len(),
                summary.report.num_surfels.map_or("-".to_string(), |n| n.to_string()),
            );
        }
        Command::Evaluate {
            trajectory,
            gt,
            renders,
            scene,
            report,
            seed,
            depth_alignment,
        } => {
            let row = cmd_evaluate(&EvaluateArgs {
                trajectory,
                ground_truth: gt,
                renders,
                scene,
                report: report.clone(),
                seed,
                depth_alignment: depth_alignment.parse()?,
            })?;
            println!("ate_rmse {:.6}, wrote {}", row.ate_rmse.unwrap_or(f64::NAN), report.display());
        }
        Command::Render {
            map,
            poses,
            intrinsics,
            out,
        } => {
            let n = cmd_render(&map, &poses, &intrinsics, &out)?;
            println!("rendered {n} frames to {}", out.display());
        }
        Command::OptimizeGraph {
            input,
            output,
            overrides,
        } => {
            let cfg = config_from(&overrides)?;
            let r = cmd_optimize_graph(&input, &output, &cfg.tracking.solver)?;
            println!(
                "chi2 {:.6e} -> {:.6e} in {} iterations (converged: {})",
                r.initial_chi2, r.final_chi2, r.iterations, r.converged
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
