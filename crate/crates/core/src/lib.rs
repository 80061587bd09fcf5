//! Core geometry and optimization for compositional single-image 3D scene
//! assembly.
//!
//! The crate covers the numerical heart of the scene-assembly pipeline:
//!
//! - shared geometric vocabulary (cameras, meshes, point clouds, masks,
//!   transforms, bounding volumes) in [`math`], [`camera`], [`mesh`],
//!   [`cloud`], [`mask`] and [`bounds`],
//! - a differentiable soft-silhouette rasterizer ([`raster`]),
//! - the composite pose-fitting loss and its exact forward-mode gradients
//!   ([`loss`], [`dual`]),
//! - scene-level geometric inference: RANSAC floor fitting, point-map
//!   stenciling, ICP registration ([`scene`]),
//! - the 4-DoF planar / 5-DoF regular pose models and the fitting loop
//!   ([`pose`]),
//! - the scene-level evaluation metrics ([`metrics`]).
//!
//! All types are plain immutable values; every operation is a pure function
//! of its inputs and safe to call from multiple threads.

pub mod bounds;
pub mod camera;
pub mod cloud;
pub mod dual;
pub mod error;
pub mod image;
pub mod loss;
pub mod mask;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod pose;
pub mod raster;
pub mod scene;
pub mod spatial;

pub use bounds::{compute_aabb, compute_obb, Aabb, Obb};
pub use camera::Camera;
pub use cloud::{OrganizedPointMap, PointCloud};
pub use error::CoreError;
pub use image::RgbImage;
pub use mask::BinaryMask;
pub use math::{Mat3, Pt3, RigidTransform, Vec3};
pub use mesh::TriMesh;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
