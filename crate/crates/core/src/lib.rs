//! Point cloud registration and trajectory optimization with exact residual
//! downsampling.
//!
//! The crate covers the full pipeline: SE(3) pose algebra, Gaussian point
//! clouds, distribution-to-distribution registration, exact coreset
//! extraction over the per-point quadratic terms, occupancy-grid overlap
//! tests, and factor-graph optimization for odometry and global mapping.

pub mod caratheodory;
pub mod cloud;
pub mod coreset;
pub mod error;
pub mod bench;
pub mod gicp;
pub mod graph;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod occgrid;
pub mod odometry;
pub mod registration;
pub mod se3;
pub mod submap;
pub mod synth;

pub use bench::{bench_approximation, BenchConfig, BenchRecord};
pub use cloud::{estimate_covariances, GaussianCloud};
pub use coreset::{extract_coreset, relinearize_coreset, Coreset, DeferredState};
pub use error::{Error, Result};
pub use gicp::{evaluate_cost, linearize_full, QuadraticFactor, ResidualBank};
pub use graph::{GicpFactor, OptimizeConfig, OptimizeReport, PoseGraph, PriorFactor};
pub use occgrid::OccupancyGrid;
pub use odometry::{OdometryConfig, OdometryState, StepOutcome};
pub use registration::{register, RegisterConfig, RegisterOutcome};
pub use se3::{displacement, Pose, Twist};
pub use submap::{build_global_graph, Submap};
pub use synth::{synth_scene, SceneKind};

// Every fenced Rust block in the guide runs as a doc-test, so the book
// cannot drift from the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Poses, "../../../book/src/poses.md");
    chapter!(Registration, "../../../book/src/registration.md");
    chapter!(Coresets, "../../../book/src/coresets.md");
    chapter!(Occupancy, "../../../book/src/occupancy.md");
    chapter!(Odometry, "../../../book/src/odometry.md");
    chapter!(Graphs, "../../../book/src/graphs.md");
    chapter!(Benchmarking, "../../../book/src/benchmarking.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
