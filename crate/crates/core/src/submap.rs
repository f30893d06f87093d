//! Submaps and the dense global graph over them.
//!
//! A submap aggregates a run of frames into one cloud expressed in its own
//! frame, carrying a world pose and an occupancy grid. The global graph
//! tests every submap pair for overlap and adds a registration factor for
//! each pair above threshold; the first submap is anchored to fix the
//! gauge.

use crate::cloud::{estimate_covariances, GaussianCloud};
use crate::error::{Error, Result};
use crate::graph::{GicpFactor, PoseGraph};
use crate::occgrid::OccupancyGrid;
use crate::se3::Pose;
use nalgebra::Vector3;
use std::sync::Arc;

pub struct Submap {
    /// World pose of the submap frame.
    pub pose: Pose,
    /// Aggregated points, expressed in the submap frame.
    pub cloud: Arc<GaussianCloud>,
    pub grid: Arc<OccupancyGrid>,
}

impl Submap {
    /// Bundles points already expressed in the submap frame.
    pub fn build(points: &[Vector3<f64>], pose: Pose, resolution: f64) -> Result<Submap> {
        Ok(Submap {
            pose,
            cloud: Arc::new(estimate_covariances(points, 10)?),
            grid: Arc::new(OccupancyGrid::build(points, resolution)?),
        })
    }

    /// Aggregates sensor-frame clouds at their world poses into the frame
    /// of the anchor pose.
    pub fn from_frames(
        poses: &[Pose],
        clouds: &[Vec<Vector3<f64>>],
        anchor: usize,
        resolution: f64,
    ) -> Result<Submap> {
        assert_eq!(poses.len(), clouds.len());
        assert!(anchor < poses.len());
        let base_inv = poses[anchor].inverse();
        let mut points = Vec::with_capacity(clouds.iter().map(Vec::len).sum());
        for (pose, cloud) in poses.iter().zip(clouds) {
            let rel = base_inv.compose(pose);
            points.extend(cloud.iter().map(|p| rel.transform_point(p)));
        }
        Submap::build(&points, poses[anchor], resolution)
    }
}

/// Builds the dense pairwise graph: every ordered pair i < j whose clouds
/// overlap at the current pose estimates becomes a factor, and the first
/// submap is anchored. An empty factor set is a valid outcome; the caller
/// decides whether that is acceptable.
pub fn build_global_graph(
    submaps: &[Submap],
    overlap_threshold: f64,
    coreset_size: Option<usize>,
    max_corr_dist: f64,
) -> Result<PoseGraph> {
    if submaps.len() < 2 {
        return Err(Error::TooFewSubmaps(submaps.len()));
    }
    let mut graph = PoseGraph::new();
    for sm in submaps {
        graph.add_pose(sm.pose);
    }
    graph.anchor(0);
    for i in 0..submaps.len() {
        for j in (i + 1)..submaps.len() {
            let rel = submaps[i].pose.inverse().compose(&submaps[j].pose);
            let overlap = submaps[i].grid.overlap(&submaps[j].cloud.means, &rel)?;
            if overlap >= overlap_threshold {
                graph.factors.push(GicpFactor::new(
                    i,
                    j,
                    Arc::clone(&submaps[i].cloud),
                    Arc::clone(&submaps[j].cloud),
                    coreset_size,
                    max_corr_dist,
                ));
            }
        }
    }
    Ok(graph)
}
