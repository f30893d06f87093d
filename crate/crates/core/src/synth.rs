//! Synthetic scan sequences over structured indoor scenes.
//!
//! Each scene is a set of planar surfaces sampled once into a world-frame
//! base point set (deterministic per seed). A frame's cloud is the subset
//! of base points within sensor range of that frame's pose, expressed in
//! the sensor frame, with independent Gaussian noise per frame. Identical
//! poses therefore see identical geometry: with zero noise and identity
//! motion consecutive clouds are bit-identical.

use crate::se3::Pose;
use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::str::FromStr;

pub const DEFAULT_POINTS_PER_FRAME: usize = 10_000;
/// Base points beyond this distance from the sensor are not observed.
pub const SENSOR_RANGE: f64 = 15.0;
/// Declared bound on the start-to-end gap of the loop trajectory.
pub const LOOP_CLOSURE_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Closed 20 x 12 x 4 m room, static sensor at the center.
    Room,
    /// Straight 6 x 3 m corridor; the sensor advances 0.3 m per frame.
    Corridor,
    /// Square hall with a central pillar; the sensor drives a full circle
    /// and returns to its starting pose.
    Loop,
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "room" => Ok(SceneKind::Room),
            "corridor" => Ok(SceneKind::Corridor),
            "loop" => Ok(SceneKind::Loop),
            other => Err(format!("unknown scene kind '{other}' (room|corridor|loop)")),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneKind::Room => "room",
            SceneKind::Corridor => "corridor",
            SceneKind::Loop => "loop",
        })
    }
}

/// Axis-aligned rectangle: origin corner plus two edge vectors.
struct Panel {
    origin: Vector3<f64>,
    edge_u: Vector3<f64>,
    edge_v: Vector3<f64>,
}

impl Panel {
    fn area(&self) -> f64 {
        self.edge_u.cross(&self.edge_v).norm()
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        self.origin + self.edge_u * rng.random::<f64>() + self.edge_v * rng.random::<f64>()
    }
}

fn boxed_panels(lo: Vector3<f64>, hi: Vector3<f64>, with_ends: bool) -> Vec<Panel> {
    let d = hi - lo;
    let ex = Vector3::new(d.x, 0.0, 0.0);
    let ey = Vector3::new(0.0, d.y, 0.0);
    let ez = Vector3::new(0.0, 0.0, d.z);
    let mut panels = vec![
        Panel { origin: lo, edge_u: ex, edge_v: ey }, // floor
        Panel { origin: lo + ez, edge_u: ex, edge_v: ey }, // ceiling
        Panel { origin: lo, edge_u: ex, edge_v: ez }, // y = lo wall
        Panel { origin: lo + ey, edge_u: ex, edge_v: ez }, // y = hi wall
    ];
    if with_ends {
        panels.push(Panel { origin: lo, edge_u: ey, edge_v: ez });
        panels.push(Panel { origin: lo + ex, edge_u: ey, edge_v: ez });
    }
    panels
}

struct SceneModel {
    panels: Vec<Panel>,
    trajectory: Vec<Pose>,
    /// Multiple of points_per_frame to sample into the world base set so
    /// that a single frame still sees roughly points_per_frame of them.
    base_factor: f64,
}

fn yaw_pose(position: Vector3<f64>, yaw: f64) -> Pose {
    let (s, c) = yaw.sin_cos();
    let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    Pose::new(rotation, position)
}

fn build_model(kind: SceneKind, frame_count: usize) -> SceneModel {
    match kind {
        SceneKind::Room => SceneModel {
            panels: boxed_panels(
                Vector3::new(-10.0, -6.0, 0.0),
                Vector3::new(10.0, 6.0, 4.0),
                true,
            ),
            trajectory: vec![Pose::from_translation(Vector3::new(0.0, 0.0, 1.5)); frame_count],
            base_factor: 1.0,
        },
        SceneKind::Corridor => {
            let travel = 0.3 * (frame_count - 1) as f64;
            let lo = Vector3::new(-SENSOR_RANGE, -3.0, 0.0);
            let hi = Vector3::new(travel + SENSOR_RANGE, 3.0, 3.0);
            let length = hi.x - lo.x;
            SceneModel {
                panels: boxed_panels(lo, hi, true),
                trajectory: (0..frame_count)
                    .map(|k| {
                        Pose::from_translation(Vector3::new(0.3 * k as f64, 0.0, 1.5))
                    })
                    .collect(),
                base_factor: length / (2.0 * SENSOR_RANGE),
            }
        }
        SceneKind::Loop => {
            // 30 x 30 hall, central 14 x 14 pillar; circuit of radius 11.
            let mut panels = boxed_panels(
                Vector3::new(-15.0, -15.0, 0.0),
                Vector3::new(15.0, 15.0, 4.0),
                true,
            );
            panels.extend(boxed_panels(
                Vector3::new(-7.0, -7.0, 0.0),
                Vector3::new(7.0, 7.0, 4.0),
                true,
            ));
            let trajectory = (0..frame_count)
                .map(|k| {
                    let theta = if frame_count > 1 {
                        2.0 * std::f64::consts::PI * k as f64 / (frame_count - 1) as f64
                    } else {
                        0.0
                    };
                    let position =
                        Vector3::new(11.0 * theta.cos(), 11.0 * theta.sin(), 1.5);
                    // Heading follows the direction of travel.
                    yaw_pose(position, theta + std::f64::consts::FRAC_PI_2)
                })
                .collect();
            SceneModel { panels, trajectory, base_factor: 3.0 }
        }
    }
}

/// Generates a deterministic scan sequence and its ground-truth
/// trajectory; clouds are in the sensor frame of their pose.
pub fn synth_scene(
    kind: SceneKind,
    noise_sigma: f64,
    frame_count: usize,
    seed: u64,
) -> (Vec<Vec<Vector3<f64>>>, Vec<Pose>) {
    synth_scene_sized(kind, noise_sigma, frame_count, seed, DEFAULT_POINTS_PER_FRAME)
}

pub fn synth_scene_sized(
    kind: SceneKind,
    noise_sigma: f64,
    frame_count: usize,
    seed: u64,
    points_per_frame: usize,
) -> (Vec<Vec<Vector3<f64>>>, Vec<Pose>) {
    assert!(frame_count >= 1, "need at least one frame");
    let model = build_model(kind, frame_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // World-frame base sample of all surfaces, area-weighted.
    let total_area: f64 = model.panels.iter().map(Panel::area).sum();
    let n_base = ((points_per_frame as f64) * model.base_factor).ceil() as usize;
    let mut base = Vec::with_capacity(n_base);
    while base.len() < n_base {
        let mut pick = rng.random::<f64>() * total_area;
        let panel = model
            .panels
            .iter()
            .find(|p| {
                pick -= p.area();
                pick <= 0.0
            })
            .unwrap_or_else(|| model.panels.last().unwrap());
        base.push(panel.sample(&mut rng));
    }

    let normal = Normal::new(0.0, noise_sigma.max(0.0)).unwrap();
    let clouds = model
        .trajectory
        .iter()
        .map(|pose| {
            let inv = pose.inverse();
            base.iter()
                .filter(|p| (*p - pose.translation).norm() <= SENSOR_RANGE)
                .map(|p| {
                    let local = inv.transform_point(p);
                    if noise_sigma > 0.0 {
                        local
                            + Vector3::new(
                                normal.sample(&mut rng),
                                normal.sample(&mut rng),
                                normal.sample(&mut rng),
                            )
                    } else {
                        local
                    }
                })
                .collect()
        })
        .collect();
    (clouds, model.trajectory)
}
