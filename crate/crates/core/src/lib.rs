//! Rigid pose estimation from any mixture of point-to-point, point-to-line
//! and point-to-plane correspondences.
//!
//! The crate provides:
//!
//! - a least-squares solver that enumerates local minimizers of the squared
//!   residual cost ([`ls::solve_least_squares`]), so near-ambiguous inputs
//!   can be disambiguated by a prior instead of silently picking the wrong
//!   global minimum;
//! - a unified minimal solver for every 6-constraint configuration
//!   ([`minimal::solve_minimal`]), suitable for RANSAC hypothesis generation;
//! - a RANSAC wrapper ([`ransac::ransac_estimate`]);
//! - synthetic problem and ambiguity-fixture generators plus a benchmark
//!   driver ([`synth`]).
//!
//! All operations are pure functions over value types and safe to call
//! concurrently.

pub mod cgr;
pub mod error;
pub mod geom;
pub mod ls;
pub mod minimal;
pub mod polysys;
pub mod ransac;
pub mod synth;

pub use cgr::CgrVector;
pub use error::{Error, Result};
pub use geom::{
    rotation_error_deg, translation_error_rel, CorrespondenceSet, GeneralResidual, Mat3, PointToLine,
    PointToPlane, PointToPoint, Pose, Vec3,
};
pub use ls::{solve_least_squares, SolutionCandidate};
pub use minimal::{solve_minimal, MinimalConfig};
pub use ransac::{ransac_estimate, RansacEstimate, RansacParams};
pub use synth::SynthSpec;
