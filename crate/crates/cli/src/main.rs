//! `scanreg`: registration, benchmarking, and pipeline tools over the
//! library crate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed inputs), 3 numerical failure.

mod pipeline;

use clap::{Parser, Subcommand};
use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use scanreg::bench::{bench_approximation, BenchConfig, BenchRecord};
use scanreg::cloud::estimate_covariances;
use scanreg::error::Error;
use scanreg::io::{
    load_ply, load_trajectory, save_ply, save_trajectory, PlyFormat, TrajectoryRecord,
};
use scanreg::metrics::ate;
use scanreg::occgrid::OccupancyGrid;
use scanreg::registration::{register, RegisterConfig};
use scanreg::se3::Pose;
use scanreg::synth::{synth_scene, SceneKind};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "scanreg", version, about = "Point cloud registration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Residuals retained by the exact downsampling step.
        #[arg(long, default_value_t = 128)]
        coreset_size: usize,
        /// Linearize every point at every iteration instead.
        #[arg(long)]
        no_coreset: bool,
        #[arg(long, default_value_t = 2.0)]
        max_corr_dist: f64,
        /// Write the final pose as a one-line trajectory file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare coreset, random-subsample, and frozen-quadratic
    /// approximations against full re-linearization.
    BenchApprox {
        #[arg(long)]
        scene: SceneKind,
        #[arg(long, default_value = "32,64,128,256")]
        sizes: String,
        #[arg(long, default_value_t = 0.5)]
        max_trans: f64,
        #[arg(long, default_value_t = 5.0)]
        max_rot: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fraction of source points landing in occupied voxels of the target.
    Overlap {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Pose of the source in the target frame: "tx ty tz qx qy qz qw".
        #[arg(long, default_value = "0 0 0 0 0 0 1")]
        pose: String,
        #[arg(long, default_value_t = 0.5)]
        resolution: f64,
    },
    /// Odometry plus global submap optimization over a directory of scans.
    Pipeline {
        /// Directory of .ply scans, processed in filename order.
        #[arg(long)]
        scans: PathBuf,
        /// Flat key=value settings file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_traj: PathBuf,
        #[arg(long)]
        out_global: PathBuf,
    },
    /// Generate a synthetic scene: numbered PLY frames plus ground truth.
    Synth {
        #[arg(long)]
        kind: SceneKind,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 0.005)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Root-mean-square translation error after rigid alignment.
    EvalAte {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_)
        | Error::Parse(_)
        | Error::EmptyCloud
        | Error::TooFewPoints { .. }
        | Error::LengthMismatch { .. }
        | Error::InvalidResolution(_)
        | Error::EmptySource
        | Error::TooFewSubmaps(_) => 2,
        Error::AngleAtBoundary { .. }
        | Error::SingularInformationMatrix
        | Error::NoValidCorrespondences
        | Error::NumericalDegeneracy
        | Error::SingularSystem
        | Error::SingularMatrix => 3,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Register {
            source,
            target,
            coreset_size,
            no_coreset,
            max_corr_dist,
            out,
        } => cmd_register(&source, &target, coreset_size, no_coreset, max_corr_dist, out),
        Command::BenchApprox {
            scene,
            sizes,
            max_trans,
            max_rot,
            trials,
            seed,
            out,
        } => cmd_bench(scene, &sizes, max_trans, max_rot, trials, seed, &out),
        Command::Overlap {
            source,
            target,
            pose,
            resolution,
        } => cmd_overlap(&source, &target, &pose, resolution),
        Command::Pipeline {
            scans,
            config,
            out_traj,
            out_global,
        } => pipeline::run(&scans, config.as_deref(), &out_traj, &out_global),
        Command::Synth {
            kind,
            frames,
            noise,
            seed,
            out,
        } => cmd_synth(kind, frames, noise, seed, &out),
        Command::EvalAte { estimate, truth } => cmd_eval_ate(&estimate, &truth),
    }
}

fn pose_to_line(pose: &Pose) -> String {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        pose.rotation,
    ));
    let t = pose.translation;
    format!("{} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w)
}

fn parse_pose(s: &str) -> Result<Pose, Error> {
    let fields: Vec<f64> = s
        .split_ascii_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad float '{tok}' in pose")))
        })
        .collect::<Result<_, _>>()?;
    if fields.len() != 7 {
        return Err(Error::Parse(format!(
            "pose needs 7 fields (tx ty tz qx qy qz qw), got {}",
            fields.len()
        )));
    }
    let q = Quaternion::new(fields[6], fields[3], fields[4], fields[5]);
    if (q.norm() - 1.0).abs() > 1e-3 {
        return Err(Error::Parse(format!(
            "quaternion norm {} is not unit",
            q.norm()
        )));
    }
    let rotation = UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner();
    Ok(Pose::new(
        rotation,
        Vector3::new(fields[0], fields[1], fields[2]),
    ))
}

fn load_cloud(path: &Path) -> Result<scanreg::cloud::GaussianCloud, Error> {
    estimate_covariances(&load_ply(path)?, 10)
}

fn cmd_register(
    source: &Path,
    target: &Path,
    coreset_size: usize,
    no_coreset: bool,
    max_corr_dist: f64,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let source = load_cloud(source)?;
    let target = load_cloud(target)?;
    let config = RegisterConfig {
        max_corr_dist,
        coreset_size: if no_coreset { None } else { Some(coreset_size) },
        ..RegisterConfig::default()
    };
    let outcome = register(&source, &target, &Pose::identity(), &config)?;
    println!("pose: {}", pose_to_line(&outcome.pose));
    println!("cost: {}", outcome.cost);
    println!("iterations: {}", outcome.iterations);
    println!(
        "full linearizations: {} ({} point evaluations)",
        outcome.evals.full_linearizations, outcome.evals.full_point_evals
    );
    println!(
        "coreset linearizations: {} ({} point evaluations)",
        outcome.evals.coreset_linearizations, outcome.evals.coreset_point_evals
    );
    if let Some(path) = out {
        save_trajectory(
            &path,
            &[TrajectoryRecord {
                timestamp: 0.0,
                pose: outcome.pose,
            }],
        )?;
    }
    Ok(())
}

fn cmd_bench(
    scene: SceneKind,
    sizes: &str,
    max_trans: f64,
    max_rot: f64,
    trials: usize,
    seed: u64,
    out: &Path,
) -> Result<(), Error> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad size '{tok}'")))
        })
        .collect::<Result<_, _>>()?;
    if sizes.is_empty() {
        return Err(Error::Parse("need at least one coreset size".into()));
    }

    // Scene pair: consecutive frames, sampling pose from a full-precision
    // registration so the benchmark probes around the optimum.
    let (clouds, truth) = synth_scene(scene, 0.002, 2, seed);
    let source = estimate_covariances(&clouds[1], 10)?;
    let target = estimate_covariances(&clouds[0], 10)?;
    let init = truth[0].inverse().compose(&truth[1]);
    let reg_config = RegisterConfig {
        coreset_size: None,
        ..RegisterConfig::default()
    };
    let sampling_pose = register(&source, &target, &init, &reg_config)?.pose;

    let config = BenchConfig {
        sizes,
        max_translation: max_trans,
        max_rotation_deg: max_rot,
        trials,
        seed,
        ..BenchConfig::default()
    };
    let records = bench_approximation(&source, &target, &sampling_pose, &config)?;

    let mut csv = String::with_capacity(records.len() * 64);
    csv.push_str(BenchRecord::CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    std::fs::write(out, csv)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_overlap(source: &Path, target: &Path, pose: &str, resolution: f64) -> Result<(), Error> {
    let source = load_ply(source)?;
    let target = load_ply(target)?;
    let pose = parse_pose(pose)?;
    let grid = OccupancyGrid::build(&target, resolution)?;
    let ratio = grid.overlap(&source, &pose)?;
    println!("{ratio}");
    Ok(())
}

fn cmd_synth(
    kind: SceneKind,
    frames: usize,
    noise: f64,
    seed: u64,
    out: &Path,
) -> Result<(), Error> {
    if frames == 0 {
        return Err(Error::Parse("frame count must be at least 1".into()));
    }
    std::fs::create_dir_all(out)?;
    let (clouds, truth) = synth_scene(kind, noise, frames, seed);
    for (k, cloud) in clouds.iter().enumerate() {
        save_ply(
            &out.join(format!("frame_{k:04}.ply")),
            cloud,
            PlyFormat::BinaryLittleEndian,
        )?;
    }
    let records: Vec<TrajectoryRecord> = truth
        .iter()
        .enumerate()
        .map(|(k, pose)| TrajectoryRecord {
            timestamp: k as f64,
            pose: *pose,
        })
        .collect();
    save_trajectory(&out.join("truth.txt"), &records)?;
    println!("wrote {frames} frames and truth.txt to {}", out.display());
    Ok(())
}

fn cmd_eval_ate(estimate: &Path, truth: &Path) -> Result<(), Error> {
    let est = load_trajectory(estimate)?;
    let tru = load_trajectory(truth)?;
    if est.len() != tru.len() {
        return Err(Error::LengthMismatch {
            expected: tru.len(),
            got: est.len(),
        });
    }
    for (k, (a, b)) in est.iter().zip(tru.iter()).enumerate() {
        if (a.timestamp - b.timestamp).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "timestamp mismatch at record {k}: {} vs {}",
                a.timestamp, b.timestamp
            )));
        }
    }
    let est_poses: Vec<Pose> = est.iter().map(|r| r.pose).collect();
    let tru_poses: Vec<Pose> = tru.iter().map(|r| r.pose).collect();
    println!("{}", ate(&est_poses, &tru_poses)?);
    Ok(())
}
