//! Error type shared by all core operations.

use thiserror::Error;

/// Failures of geometric and numerical operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// A point lies behind (or on) the camera plane.
    #[error("depth {0} is not positive")]
    DepthNonPositive(f64),

    /// An operation received an empty mesh or cloud.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A mesh with no faces was passed to a renderer.
    #[error("mesh has no faces")]
    EmptyMesh,

    /// Every face of the mesh lies behind the camera.
    #[error("all faces culled by the near plane")]
    AllFacesCulled,

    /// Two pixel grids that must agree in size do not.
    #[error("shape mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    ShapeMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    /// Fewer points than the operation needs.
    #[error("insufficient points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    /// RANSAC could not find a model meeting the inlier-fraction floor.
    #[error("no consensus: best inlier fraction {best:.4} < required {required:.4}")]
    NoConsensus { best: f64, required: f64 },

    /// Iterative registration error grew for too many consecutive steps.
    #[error("registration diverged after {0} iterations")]
    Diverged(usize),

    /// All points of a cloud are identical; it cannot be normalized.
    #[error("degenerate cloud: zero spatial extent")]
    DegenerateCloud,

    /// Surface sampling failed because the scene has no area.
    #[error("sampling failed: total surface area is zero")]
    SamplingFailed,

    /// A loss or gradient stopped being finite.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// The planar pose model needs a fitted floor plane.
    #[error("planar pose model requires a plane")]
    MissingPlane,

    /// A constructor invariant was violated.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
