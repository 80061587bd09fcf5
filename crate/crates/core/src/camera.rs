//! Pinhole camera and projection primitives.
//!
//! Camera frame convention: +Z forward, +Y down, +X completing a
//! right-handed frame. `pose` maps camera coordinates into world
//! coordinates. Imported data must conform to this convention.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math::{Pt3, RigidTransform, Vec2, Vec3};
use crate::Result;

/// Minimum camera-frame depth considered "in front of" the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Pinhole camera: intrinsics in pixels plus a world-from-camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0..(width as f64)).contains(&cx) || !(0.0..(height as f64)).contains(&cy) {
            return Err(CoreError::InvalidParameter(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Camera at `eye` looking toward `target`, with the image "up"
    /// direction chosen so that `up_hint` points toward the top of the
    /// frame (camera +Y is down).
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        eye: Pt3,
        target: Pt3,
        up_hint: Vec3,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(CoreError::InvalidParameter(
                "look_at: eye and target coincide".into(),
            ));
        }
        let z = forward.normalize();
        let down = -up_hint;
        let x = down.cross(&z);
        if x.norm() < 1e-9 {
            return Err(CoreError::InvalidParameter(
                "look_at: view direction parallel to up_hint".into(),
            ));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation =
            crate::math::Mat3::from_columns(&[x, y, z]);
        let pose = RigidTransform::new(rotation, eye.coords)?;
        Self::new(fx, fy, cx, cy, width, height, pose)
    }

    /// World point into the camera frame.
    pub fn world_to_camera(&self, p: &Pt3) -> Pt3 {
        self.pose.inverse().apply(p)
    }

    /// Camera-frame point into the world.
    pub fn camera_to_world(&self, p: &Pt3) -> Pt3 {
        self.pose.apply(p)
    }
}

/// Project a world point through the pinhole model.
///
/// Returns the continuous pixel position and the camera-frame depth.
/// Errors with [`CoreError::DepthNonPositive`] when the point is behind or
/// on the camera plane.
pub fn project_point(camera: &Camera, p: &Pt3) -> Result<(Vec2, f64)> {
    let c = camera.world_to_camera(p);
    if c.z <= MIN_DEPTH {
        return Err(CoreError::DepthNonPositive(c.z));
    }
    let u = camera.fx * c.x / c.z + camera.cx;
    let v = camera.fy * c.y / c.z + camera.cy;
    Ok((Vec2::new(u, v), c.z))
}

/// Inverse of [`project_point`]: lift a pixel at a given depth back into
/// the world.
pub fn backproject_pixel(camera: &Camera, pixel: Vec2, depth: f64) -> Result<Pt3> {
    if depth <= 0.0 {
        return Err(CoreError::DepthNonPositive(depth));
    }
    let x = (pixel.x - camera.cx) / camera.fx * depth;
    let y = (pixel.y - camera.cy) / camera.fy * depth;
    Ok(camera.camera_to_world(&Pt3::new(x, y, depth)))
}
