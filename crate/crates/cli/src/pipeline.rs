//! The pipeline subcommand: sliding-window odometry over a directory of
//! scans, submap aggregation at a fixed frame interval, then dense global
//! graph optimization. Settings come from a flat key=value file; every
//! key has a default, and unknown keys are rejected.

use nalgebra::Vector3;
use scanreg::coreset::Thresholds;
use scanreg::error::Error;
use scanreg::graph::OptimizeConfig;
use scanreg::io::{load_key_values, load_ply, save_trajectory, TrajectoryRecord};
use scanreg::odometry::{OdometryConfig, OdometryState};
use scanreg::se3::Pose;
use scanreg::submap::{build_global_graph, Submap};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

struct Settings {
    voxel_resolution: f64,
    max_corr_dist: f64,
    /// 0 disables the coreset path.
    coreset_size: usize,
    window: usize,
    preceding_links: usize,
    overlap_floor: f64,
    keyframe_threshold: f64,
    keyframe_cap: usize,
    prior_weight: f64,
    max_iterations: usize,
    lambda_init: f64,
    cost_tolerance: f64,
    step_tolerance: f64,
    defer_trans: f64,
    defer_rot_deg: f64,
    resample_trans: f64,
    resample_rot_deg: f64,
    submap_interval: usize,
    global_overlap_threshold: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let odo = OdometryConfig::default();
        let opt = OptimizeConfig::default();
        let th = Thresholds::default();
        Settings {
            voxel_resolution: odo.grid_resolution,
            max_corr_dist: odo.max_corr_dist,
            coreset_size: odo.coreset_size.unwrap_or(0),
            window: odo.window,
            preceding_links: odo.preceding_links,
            overlap_floor: odo.overlap_floor,
            keyframe_threshold: odo.keyframe_threshold,
            keyframe_cap: odo.keyframe_cap,
            prior_weight: odo.prior_weight,
            max_iterations: opt.max_iterations,
            lambda_init: opt.lambda_init,
            cost_tolerance: opt.cost_tolerance,
            step_tolerance: opt.step_tolerance,
            defer_trans: th.defer.0,
            defer_rot_deg: th.defer.1,
            resample_trans: th.resample.0,
            resample_rot_deg: th.resample.1,
            submap_interval: 50,
            global_overlap_threshold: 0.15,
        }
    }
}

fn take<T: std::str::FromStr>(
    map: &mut BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, Error> {
    match map.remove(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Parse(format!("bad value '{v}' for key '{key}'"))),
        None => Ok(default),
    }
}

impl Settings {
    fn from_file(path: &Path) -> Result<Settings, Error> {
        let mut map = load_key_values(path)?;
        let d = Settings::default();
        let s = Settings {
            voxel_resolution: take(&mut map, "voxel_resolution", d.voxel_resolution)?,
            max_corr_dist: take(&mut map, "max_corr_dist", d.max_corr_dist)?,
            coreset_size: take(&mut map, "coreset_size", d.coreset_size)?,
            window: take(&mut map, "window", d.window)?,
            preceding_links: take(&mut map, "preceding_links", d.preceding_links)?,
            overlap_floor: take(&mut map, "overlap_floor", d.overlap_floor)?,
            keyframe_threshold: take(&mut map, "keyframe_threshold", d.keyframe_threshold)?,
            keyframe_cap: take(&mut map, "keyframe_cap", d.keyframe_cap)?,
            prior_weight: take(&mut map, "prior_weight", d.prior_weight)?,
            max_iterations: take(&mut map, "max_iterations", d.max_iterations)?,
            lambda_init: take(&mut map, "lambda_init", d.lambda_init)?,
            cost_tolerance: take(&mut map, "cost_tolerance", d.cost_tolerance)?,
            step_tolerance: take(&mut map, "step_tolerance", d.step_tolerance)?,
            defer_trans: take(&mut map, "defer_trans", d.defer_trans)?,
            defer_rot_deg: take(&mut map, "defer_rot_deg", d.defer_rot_deg)?,
            resample_trans: take(&mut map, "resample_trans", d.resample_trans)?,
            resample_rot_deg: take(&mut map, "resample_rot_deg", d.resample_rot_deg)?,
            submap_interval: take(&mut map, "submap_interval", d.submap_interval)?,
            global_overlap_threshold: take(
                &mut map,
                "global_overlap_threshold",
                d.global_overlap_threshold,
            )?,
        };
        if let Some(key) = map.keys().next() {
            return Err(Error::Parse(format!("unknown config key '{key}'")));
        }
        if s.submap_interval == 0 {
            return Err(Error::Parse("submap_interval must be at least 1".into()));
        }
        Ok(s)
    }

    fn coreset(&self) -> Option<usize> {
        (self.coreset_size > 0).then_some(self.coreset_size)
    }

    fn thresholds(&self) -> Thresholds {
        Thresholds {
            defer: (self.defer_trans, self.defer_rot_deg),
            resample: (self.resample_trans, self.resample_rot_deg),
        }
    }

    fn optimize(&self) -> OptimizeConfig {
        OptimizeConfig {
            max_iterations: self.max_iterations,
            lambda_init: self.lambda_init,
            cost_tolerance: self.cost_tolerance,
            step_tolerance: self.step_tolerance,
        }
    }

    fn odometry(&self) -> OdometryConfig {
        OdometryConfig {
            window: self.window,
            preceding_links: self.preceding_links,
            overlap_floor: self.overlap_floor,
            keyframe_threshold: self.keyframe_threshold,
            keyframe_cap: self.keyframe_cap,
            coreset_size: self.coreset(),
            max_corr_dist: self.max_corr_dist,
            grid_resolution: self.voxel_resolution,
            prior_weight: self.prior_weight,
            thresholds: self.thresholds(),
            optimize: self.optimize(),
        }
    }
}

fn records(poses: &[Pose]) -> Vec<TrajectoryRecord> {
    poses
        .iter()
        .enumerate()
        .map(|(k, pose)| TrajectoryRecord {
            timestamp: k as f64,
            pose: *pose,
        })
        .collect()
}

pub fn run(
    scans: &Path,
    config: Option<&Path>,
    out_traj: &Path,
    out_global: &Path,
) -> Result<(), Error> {
    let settings = match config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(scans)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "ply"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Parse(format!(
            "no .ply files in {}",
            scans.display()
        )));
    }

    let mut odo = OdometryState::new(settings.odometry());
    let mut raw_clouds: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(files.len());
    for file in &files {
        let points = load_ply(file)?;
        let outcome = odo.step(&points)?;
        if outcome.degenerate {
            eprintln!(
                "warning: frame {} has no usable overlap; keeping predicted pose",
                outcome.frame_index
            );
        }
        raw_clouds.push(points);
    }
    let poses: Vec<Pose> = odo.trajectory().into_iter().map(|(_, p)| p).collect();
    save_trajectory(out_traj, &records(&poses))?;
    println!("frames: {}", poses.len());
    println!("keyframes: {}", odo.keyframes.len());
    println!("degenerate frames: {}", odo.degenerate_frames.len());

    // Aggregate fixed-interval submaps anchored at their first frame.
    let mut submaps = Vec::new();
    let mut spans = Vec::new();
    let mut start = 0;
    while start < poses.len() {
        let end = (start + settings.submap_interval).min(poses.len());
        submaps.push(Submap::from_frames(
            &poses[start..end],
            &raw_clouds[start..end],
            0,
            settings.voxel_resolution,
        )?);
        spans.push((start, end));
        start = end;
    }

    if submaps.len() < 2 {
        println!("submaps: {} — global graph skipped, odometry trajectory copied", submaps.len());
        save_trajectory(out_global, &records(&poses))?;
        return Ok(());
    }

    let mut graph = build_global_graph(
        &submaps,
        settings.global_overlap_threshold,
        settings.coreset(),
        settings.max_corr_dist,
    )?;
    for factor in graph.factors.iter_mut() {
        factor.state.thresholds = settings.thresholds();
    }
    println!("submaps: {} ({} factors)", submaps.len(), graph.factors.len());

    if graph.factors.is_empty() {
        println!("no submap pair overlaps; global trajectory equals odometry");
        save_trajectory(out_global, &records(&poses))?;
        return Ok(());
    }

    let report = graph.optimize(&settings.optimize())?;
    if !report.dropped_factors.is_empty() {
        eprintln!(
            "warning: dropped {} factor(s) with no correspondences",
            report.dropped_factors.len()
        );
    }
    println!(
        "global optimization: {} accepted steps, cost {} -> {}",
        report.iteration_costs.len() - 1,
        report.iteration_costs.first().unwrap(),
        report.iteration_costs.last().unwrap()
    );

    // Apply each submap's correction to its frames.
    let mut global = poses.clone();
    for (s, (start, end)) in spans.iter().enumerate() {
        let delta = graph.poses[s].compose(&submaps[s].pose.inverse());
        for pose in global.iter_mut().take(*end).skip(*start) {
            *pose = delta.compose(pose);
        }
    }
    save_trajectory(out_global, &records(&global))?;
    Ok(())
}
