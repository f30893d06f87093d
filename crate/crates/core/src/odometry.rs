//! Sliding-window odometry over incoming point clouds.
//!
//! Each frame is registered against recent window frames and overlapping
//! keyframes, the window is optimized jointly, and frames leaving the
//! window are replaced by a prior on the oldest remaining pose. Factor
//! linearizations persist across steps, so once the window settles the
//! deferred-coreset states serve nearly all re-linearizations.

use crate::cloud::{estimate_covariances, GaussianCloud};
use crate::coreset::{DeferredState, Thresholds};
use crate::error::Result;
use crate::graph::{GicpFactor, OptimizeConfig, OptimizeReport, PoseGraph, PriorFactor};
use crate::occgrid::{OccupancyGrid, DEFAULT_RESOLUTION};
use crate::se3::Pose;
use nalgebra::Vector3;
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct OdometryConfig {
    /// Maximum number of frames kept in the sliding window.
    pub window: usize,
    /// How many immediately preceding frames a new frame links to.
    pub preceding_links: usize,
    /// Minimum overlap fraction for a candidate link to become a factor.
    pub overlap_floor: f64,
    /// A frame becomes a keyframe when its best overlap with the keyframe
    /// set falls below this.
    pub keyframe_threshold: f64,
    /// Maximum keyframe count; beyond it the most redundant is evicted.
    pub keyframe_cap: usize,
    pub coreset_size: Option<usize>,
    pub max_corr_dist: f64,
    pub grid_resolution: f64,
    /// Weight of the prior replacing marginalized frames.
    pub prior_weight: f64,
    /// Defer/resample gates applied to every link's deferred state.
    pub thresholds: Thresholds,
    pub optimize: OptimizeConfig,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        OdometryConfig {
            window: 10,
            preceding_links: 3,
            overlap_floor: 0.15,
            keyframe_threshold: 0.6,
            keyframe_cap: 20,
            coreset_size: Some(128),
            max_corr_dist: 2.0,
            grid_resolution: DEFAULT_RESOLUTION,
            prior_weight: 1e4,
            thresholds: Thresholds::default(),
            optimize: OptimizeConfig::default(),
        }
    }
}

#[derive(Clone)]
pub struct OdometryFrame {
    /// Global frame number, assigned in arrival order.
    pub index: usize,
    pub pose: Pose,
    pub cloud: Arc<GaussianCloud>,
    pub grid: Arc<OccupancyGrid>,
    /// Set when no factor could be formed and the pose is prediction-only.
    pub degenerate: bool,
}

#[derive(Clone)]
pub struct Keyframe {
    pub frame_index: usize,
    pub pose: Pose,
    pub cloud: Arc<GaussianCloud>,
    pub grid: Arc<OccupancyGrid>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub frame_index: usize,
    pub pose: Pose,
    pub degenerate: bool,
    pub keyframe_added: bool,
    pub report: Option<OptimizeReport>,
}

pub struct OdometryState {
    pub config: OdometryConfig,
    pub window: VecDeque<OdometryFrame>,
    pub keyframes: Vec<Keyframe>,
    /// Frames that have left the window, with their final pose estimates.
    pub evicted: Vec<(usize, Pose)>,
    pub degenerate_frames: Vec<usize>,
    /// Deferred linearization state per live link, keyed by the global
    /// indices of the two frames (older first).
    links: HashMap<(usize, usize), DeferredState>,
    /// Prior anchoring the window: oldest window frame's index and the
    /// pose it was pinned at (frozen at eviction time).
    anchor: Option<(usize, Pose)>,
    next_index: usize,
}

impl OdometryState {
    pub fn new(config: OdometryConfig) -> Self {
        OdometryState {
            config,
            window: VecDeque::new(),
            keyframes: Vec::new(),
            evicted: Vec::new(),
            degenerate_frames: Vec::new(),
            links: HashMap::new(),
            anchor: None,
            next_index: 0,
        }
    }

    /// All pose estimates so far, in frame order: evicted frames are
    /// frozen, window frames reflect the latest optimization.
    pub fn trajectory(&self) -> Vec<(usize, Pose)> {
        let mut out = self.evicted.clone();
        out.extend(self.window.iter().map(|f| (f.index, f.pose)));
        out
    }

    /// Constant-velocity prediction from the last two window poses.
    fn predict(&self) -> Pose {
        let n = self.window.len();
        match n {
            0 => Pose::identity(),
            1 => self.window[0].pose,
            _ => {
                let prev = &self.window[n - 2].pose;
                let last = &self.window[n - 1].pose;
                last.compose(&prev.inverse().compose(last))
            }
        }
    }

    /// Ingest one frame: predict, link, optimize the window, then
    /// maintain window and keyframe budgets. A frame that overlaps
    /// nothing is kept at its predicted pose and flagged degenerate.
    pub fn step(&mut self, points: &[Vector3<f64>]) -> Result<StepOutcome> {
        let index = self.next_index;
        self.next_index += 1;
        let cloud = Arc::new(estimate_covariances(points, 10)?);
        let grid = Arc::new(OccupancyGrid::build(points, self.config.grid_resolution)?);

        if self.window.is_empty() {
            // Reference frame: defines the odometry origin.
            let frame = OdometryFrame {
                index,
                pose: Pose::identity(),
                cloud: Arc::clone(&cloud),
                grid: Arc::clone(&grid),
                degenerate: false,
            };
            self.window.push_back(frame);
            self.anchor = Some((index, Pose::identity()));
            self.keyframes.push(Keyframe {
                frame_index: index,
                pose: Pose::identity(),
                cloud,
                grid,
            });
            return Ok(StepOutcome {
                frame_index: index,
                pose: Pose::identity(),
                degenerate: false,
                keyframe_added: true,
                report: None,
            });
        }

        let pred = self.predict();

        // Candidate links: recent window frames plus keyframes, gated by
        // overlap at the predicted pose.
        let mut new_links: Vec<usize> = Vec::new();
        let recent: Vec<usize> = self
            .window
            .iter()
            .rev()
            .take(self.config.preceding_links)
            .map(|f| f.index)
            .collect();
        for f in self.window.iter().rev().take(self.config.preceding_links) {
            let rel = f.pose.inverse().compose(&pred);
            if f.grid.overlap(&cloud.means, &rel)? >= self.config.overlap_floor {
                new_links.push(f.index);
            }
        }
        for kf in &self.keyframes {
            if recent.contains(&kf.frame_index) {
                continue;
            }
            let rel = kf.pose.inverse().compose(&pred);
            if kf.grid.overlap(&cloud.means, &rel)? >= self.config.overlap_floor {
                new_links.push(kf.frame_index);
            }
        }

        if new_links.is_empty() {
            self.degenerate_frames.push(index);
            self.window.push_back(OdometryFrame {
                index,
                pose: pred,
                cloud,
                grid,
                degenerate: true,
            });
            self.shrink_window();
            return Ok(StepOutcome {
                frame_index: index,
                pose: pred,
                degenerate: true,
                keyframe_added: false,
                report: None,
            });
        }

        for other in &new_links {
            self.links.entry((*other, index)).or_insert_with(|| {
                let mut state = match self.config.coreset_size {
                    Some(size) => DeferredState::new(size, self.config.max_corr_dist),
                    None => DeferredState::full_only(self.config.max_corr_dist),
                };
                if self.config.coreset_size.is_some() {
                    state.thresholds = self.config.thresholds;
                }
                state
            });
        }

        self.window.push_back(OdometryFrame {
            index,
            pose: pred,
            cloud,
            grid,
            degenerate: false,
        });

        let report = self.optimize_window()?;
        let pose = self.window.back().unwrap().pose;
        self.shrink_window();
        let keyframe_added = self.maintain_keyframes(index)?;

        Ok(StepOutcome {
            frame_index: index,
            pose,
            degenerate: false,
            keyframe_added,
            report: Some(report),
        })
    }

    /// Frame lookup across window and keyframes: pose and cloud by global
    /// index.
    fn frame_data(&self, index: usize) -> Option<(Pose, Arc<GaussianCloud>)> {
        if let Some(f) = self.window.iter().find(|f| f.index == index) {
            return Some((f.pose, Arc::clone(&f.cloud)));
        }
        self.keyframes
            .iter()
            .find(|kf| kf.frame_index == index)
            .map(|kf| (kf.pose, Arc::clone(&kf.cloud)))
    }

    fn optimize_window(&mut self) -> Result<OptimizeReport> {
        let mut graph = PoseGraph::new();
        let mut slot_of: HashMap<usize, usize> = HashMap::new();
        for f in &self.window {
            let slot = graph.add_pose(f.pose);
            slot_of.insert(f.index, slot);
        }

        // Keyframes referenced by live links enter as anchored poses.
        let window_set: Vec<usize> = self.window.iter().map(|f| f.index).collect();
        let mut needed_kfs: Vec<usize> = Vec::new();
        for (a, b) in self.links.keys() {
            for idx in [a, b] {
                if !window_set.contains(idx) && !needed_kfs.contains(idx) {
                    needed_kfs.push(*idx);
                }
            }
        }
        needed_kfs.sort_unstable();
        for idx in needed_kfs {
            if let Some(kf) = self.keyframes.iter().find(|k| k.frame_index == idx) {
                let slot = graph.add_pose(kf.pose);
                graph.anchor(slot);
                slot_of.insert(idx, slot);
            }
        }

        let (anchor_idx, anchor_pose) = self.anchor.expect("window is non-empty");
        graph.priors.push(PriorFactor {
            index: slot_of[&anchor_idx],
            pose: anchor_pose,
            weight: self.config.prior_weight,
        });

        // Move persisted deferred states into factors for this solve.
        let links = std::mem::take(&mut self.links);
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut parked: Vec<((usize, usize), DeferredState)> = Vec::new();
        for ((a, b), state) in links {
            let (Some(&si), Some(&sj)) = (slot_of.get(&a), slot_of.get(&b)) else {
                continue; // endpoint no longer live: link dies
            };
            if !window_set.contains(&a) && !window_set.contains(&b) {
                // Both endpoints anchored: nothing to optimize, keep the
                // state parked for this solve.
                parked.push(((a, b), state));
                continue;
            }
            let (_, cloud_a) = self.frame_data(a).expect("live endpoint");
            let (_, cloud_b) = self.frame_data(b).expect("live endpoint");
            graph.factors.push(GicpFactor {
                i: si,
                j: sj,
                target: cloud_a,
                source: cloud_b,
                state,
            });
            keys.push((a, b));
        }

        let config = self.config.optimize.clone();
        let report = graph.optimize(&config)?;

        for f in self.window.iter_mut() {
            f.pose = graph.poses[slot_of[&f.index]];
        }
        for (idx, (factor, key)) in graph.factors.into_iter().zip(keys.iter()).enumerate() {
            if report.dropped_factors.contains(&idx) {
                continue; // link produced no correspondences: let it die
            }
            self.links.insert(*key, factor.state);
        }
        for (key, state) in parked {
            self.links.insert(key, state);
        }
        Ok(report)
    }

    /// Evict frames beyond the window size, freezing their poses and
    /// moving the prior onto the oldest remaining frame.
    fn shrink_window(&mut self) {
        while self.window.len() > self.config.window {
            let gone = self.window.pop_front().expect("len > 0");
            self.evicted.push((gone.index, gone.pose));
            let keep_links = self.keyframes.iter().any(|k| k.frame_index == gone.index);
            if !keep_links {
                self.links.retain(|(a, b), _| *a != gone.index && *b != gone.index);
            }
            let oldest = self.window.front().expect("window non-empty");
            self.anchor = Some((oldest.index, oldest.pose));
        }
    }

    /// Insert the new frame as a keyframe when it overlaps the existing
    /// set poorly; evict the most redundant keyframe beyond the cap.
    fn maintain_keyframes(&mut self, index: usize) -> Result<bool> {
        let frame = self
            .window
            .iter()
            .find(|f| f.index == index)
            .expect("new frame is in the window")
            .clone();
        let mut best = 0.0f64;
        for kf in &self.keyframes {
            let rel = kf.pose.inverse().compose(&frame.pose);
            best = best.max(kf.grid.overlap(&frame.cloud.means, &rel)?);
        }
        if best >= self.config.keyframe_threshold {
            return Ok(false);
        }
        self.keyframes.push(Keyframe {
            frame_index: frame.index,
            pose: frame.pose,
            cloud: frame.cloud,
            grid: frame.grid,
        });

        if self.keyframes.len() > self.config.keyframe_cap {
            // Redundancy score: best pairwise overlap with any other
            // keyframe; the highest scorer (oldest on ties) goes.
            let mut worst = (0usize, -1.0f64);
            for (i, a) in self.keyframes.iter().enumerate() {
                let mut score = 0.0f64;
                for (j, b) in self.keyframes.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let rel = b.pose.inverse().compose(&a.pose);
                    score = score.max(b.grid.overlap_strided(&a.cloud.means, &rel, 7)?);
                }
                if score > worst.1 {
                    worst = (i, score);
                }
            }
            let gone = self.keyframes.remove(worst.0);
            let in_window = self.window.iter().any(|f| f.index == gone.frame_index);
            if !in_window {
                self.links
                    .retain(|(a, b), _| *a != gone.frame_index && *b != gone.frame_index);
            }
        }
        Ok(true)
    }
}
