//! Pose models and the differentiable fitting loop.
//!
//! Two parameterizations place an object into the scene:
//!
//! - [`PoseParams5`] (free objects): 3D translation, yaw about world Y,
//!   uniform scale, pivoting at the mesh OBB center.
//! - [`PoseParams4`] (floor-bound objects): in-plane translation, yaw
//!   about the plane normal, uniform scale, acting in the plane-local
//!   frame. The lowest vertex is snapped onto the plane before the
//!   parameters act and every parameter preserves plane contact, so
//!   ground contact is structural rather than penalized.
//!
//! [`fit_pose`] minimizes the composite loss with bias-corrected
//! adaptive-moment gradient descent over the active parameters, using
//! exact forward-mode derivatives. Scale is optimized as `ln s` so
//! positivity is structural; yaw is an unconstrained angle.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_obb, Aabb};
use crate::camera::Camera;
use crate::cloud::PointCloud;
use crate::dual::{Dual, DVec3, MeshTangents, MAX_PARAMS};
use crate::error::CoreError;
use crate::loss::{total_loss, LossBreakdown, LossInputs, LossWeights};
use crate::mask::BinaryMask;
use crate::math::{Pt3, Vec3};
use crate::mesh::TriMesh;
use crate::raster::{render_soft_silhouette, SoftRasterConfig};
use crate::scene::{mask_iou, Plane};
use crate::Result;

/// Free-object pose: translation, yaw about world Y, uniform scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams5 {
    pub translation: [f64; 3],
    pub yaw: f64,
    pub scale: f64,
}

impl PoseParams5 {
    pub fn identity() -> Self {
        PoseParams5 {
            translation: [0.0; 3],
            yaw: 0.0,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.translation.iter().all(|t| t.is_finite())
            && self.yaw.is_finite()
            && self.scale.is_finite()
            && self.scale > 0.0;
        if !ok {
            return Err(CoreError::InvalidParameter(format!(
                "invalid 5-DoF pose {self:?}"
            )));
        }
        Ok(())
    }
}

/// Floor-bound pose: in-plane translation, yaw about the plane normal,
/// uniform scale, all in the plane-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams4 {
    pub t_x: f64,
    pub t_z: f64,
    pub yaw: f64,
    pub scale: f64,
}

impl PoseParams4 {
    pub fn identity() -> Self {
        PoseParams4 {
            t_x: 0.0,
            t_z: 0.0,
            yaw: 0.0,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_x.is_finite()
            && self.t_z.is_finite()
            && self.yaw.is_finite()
            && self.scale.is_finite()
            && self.scale > 0.0;
        if !ok {
            return Err(CoreError::InvalidParameter(format!(
                "invalid 4-DoF pose {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which pose model an object is fit with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseVariant {
    Planar4,
    Regular5,
}

/// A pose of either variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum FittedPose {
    Planar4(PoseParams4),
    Regular5(PoseParams5),
}

impl FittedPose {
    pub fn variant(&self) -> PoseVariant {
        match self {
            FittedPose::Planar4(_) => PoseVariant::Planar4,
            FittedPose::Regular5(_) => PoseVariant::Regular5,
        }
    }
}

/// Floor rule: planar when the (dilated) object and floor masks overlap.
pub fn select_model(
    obj_mask: &BinaryMask,
    floor_mask: &BinaryMask,
    dilation_px: usize,
) -> Result<PoseVariant> {
    let iou = mask_iou(obj_mask, floor_mask, dilation_px)?;
    Ok(if iou > 0.0 {
        PoseVariant::Planar4
    } else {
        PoseVariant::Regular5
    })
}

/// Direction angle of a horizontal vector, increasing with yaw.
fn yaw_of(x: f64, z: f64) -> f64 {
    (-z).atan2(x)
}

/// Dominant horizontal direction of an OBB: the axis with the largest
/// horizontal footprint (half extent times horizontal component).
fn horizontal_principal(obb: &crate::bounds::Obb) -> Option<(f64, f64)> {
    let mut best: Option<((f64, f64), f64)> = None;
    for i in 0..3 {
        let axis = obb.axis(i);
        let h = (axis.x, axis.z);
        let h_norm = (h.0 * h.0 + h.1 * h.1).sqrt();
        let weight = obb.half_extents[i] * h_norm;
        if weight > 1e-9 && best.map(|b| weight > b.1).unwrap_or(true) {
            best = Some(((h.0 / h_norm, h.1 / h_norm), weight));
        }
    }
    best.map(|b| b.0)
}

/// Yaw difference between two axis directions, canonicalized to
/// (-pi/2, pi/2] because OBB axes are sign-ambiguous.
fn axis_yaw_delta(from: (f64, f64), to: (f64, f64)) -> f64 {
    let mut d = yaw_of(to.0, to.1) - yaw_of(from.0, from.1);
    while d > std::f64::consts::PI {
        d -= std::f64::consts::TAU;
    }
    while d <= -std::f64::consts::PI {
        d += std::f64::consts::TAU;
    }
    if d > std::f64::consts::FRAC_PI_2 {
        d -= std::f64::consts::PI;
    } else if d <= -std::f64::consts::FRAC_PI_2 {
        d += std::f64::consts::PI;
    }
    d
}

fn scale_from_obbs(mesh_obb: &crate::bounds::Obb, target_obb: &crate::bounds::Obb) -> f64 {
    let me = mesh_obb.max_extent();
    if me < 1e-12 {
        return 1.0;
    }
    let s = target_obb.max_extent() / me;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// OBB-alignment initialization of the 5-DoF model.
pub fn init_regular(mesh: &TriMesh, target: &PointCloud) -> Result<PoseParams5> {
    if mesh.vertices().is_empty() {
        return Err(CoreError::EmptyInput("init_regular mesh"));
    }
    if target.is_empty() {
        return Err(CoreError::EmptyInput("init_regular target"));
    }
    let mesh_cloud = PointCloud::new(mesh.vertices().to_vec())?;
    let mesh_obb = compute_obb(&mesh_cloud)?;
    let target_obb = compute_obb(target)?;
    let scale = scale_from_obbs(&mesh_obb, &target_obb);
    let yaw = match (
        horizontal_principal(&mesh_obb),
        horizontal_principal(&target_obb),
    ) {
        (Some(a), Some(b)) => axis_yaw_delta(a, b),
        _ => 0.0,
    };
    // The pivot (OBB center) is fixed under scale and yaw, so the
    // translation is the center difference.
    let t = target_obb.center - mesh_obb.center;
    Ok(PoseParams5 {
        translation: [t.x, t.y, t.z],
        yaw,
        scale,
    })
}

/// Bottom-projection initialization of the 4-DoF model: scale from OBB
/// ratio, in-plane translation to the target's plane-local centroid,
/// zero yaw. Ground contact comes from the model itself.
pub fn init_planar(mesh: &TriMesh, plane: &Plane, target: &PointCloud) -> Result<PoseParams4> {
    if mesh.vertices().is_empty() {
        return Err(CoreError::EmptyInput("init_planar mesh"));
    }
    if target.is_empty() {
        return Err(CoreError::EmptyInput("init_planar target"));
    }
    let mesh_cloud = PointCloud::new(mesh.vertices().to_vec())?;
    let mesh_obb = compute_obb(&mesh_cloud)?;
    let target_obb = compute_obb(target)?;
    let scale = scale_from_obbs(&mesh_obb, &target_obb);

    let grounded = GroundedMesh::build(mesh, plane);
    let target_local = plane.to_local(&target.centroid()?);
    Ok(PoseParams4 {
        t_x: target_local.x - grounded.footprint.0,
        t_z: target_local.z - grounded.footprint.1,
        yaw: 0.0,
        scale,
    })
}

/// Plane-local, ground-snapped copy of a mesh plus its footprint pivot.
struct GroundedMesh {
    /// Plane-local vertices with the lowest vertex at local Y = 0.
    local: Vec<Pt3>,
    /// XZ centroid of the bottom vertex band (the yaw/scale pivot).
    footprint: (f64, f64),
}

impl GroundedMesh {
    fn build(mesh: &TriMesh, plane: &Plane) -> GroundedMesh {
        let mut local: Vec<Pt3> = mesh.vertices().iter().map(|v| plane.to_local(v)).collect();
        let min_y = local
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min);
        for p in local.iter_mut() {
            p.y -= min_y;
        }
        let max_y = local.iter().map(|p| p.y).fold(0.0f64, f64::max);
        // Bottom band: a thin slab above the lowest vertex.
        let band = 1e-9 + 1e-6 * max_y;
        let mut cx = 0.0;
        let mut cz = 0.0;
        let mut count = 0usize;
        for p in &local {
            if p.y <= band {
                cx += p.x;
                cz += p.z;
                count += 1;
            }
        }
        let footprint = if count > 0 {
            (cx / count as f64, cz / count as f64)
        } else {
            (0.0, 0.0)
        };
        GroundedMesh { local, footprint }
    }
}

/// Dual yaw-scale-translate about a pivot:
/// `R_y(yaw) * (s*v) + (pivot + t - R_y(yaw) * (s*pivot))`.
///
/// The grouping makes the identity parameters bit-exact.
struct DualSimilarity {
    cos: Dual,
    sin: Dual,
    scale: Dual,
    offset: DVec3,
}

impl DualSimilarity {
    fn new(yaw: Dual, scale: Dual, pivot: Vec3, translation: DVec3) -> DualSimilarity {
        let cos = yaw.cos();
        let sin = yaw.sin();
        let sp = DVec3::constant(pivot).scale(scale);
        let rot_sp = DVec3::new(
            sp.x * cos + sp.z * sin,
            sp.y,
            -(sp.x * sin) + sp.z * cos,
        );
        let offset = DVec3::constant(pivot) + translation - rot_sp;
        DualSimilarity {
            cos,
            sin,
            scale,
            offset,
        }
    }

    fn apply(&self, v: Vec3) -> DVec3 {
        let sv = DVec3::constant(v).scale(self.scale);
        let rot = DVec3::new(
            sv.x * self.cos + sv.z * self.sin,
            sv.y,
            -(sv.x * self.sin) + sv.z * self.cos,
        );
        rot + self.offset
    }
}

fn collect_tangents(duals: &[DVec3], active: usize) -> (Vec<Pt3>, MeshTangents) {
    let mut vertices = Vec::with_capacity(duals.len());
    let mut per_vertex = Vec::with_capacity(duals.len());
    for d in duals {
        vertices.push(Pt3::from(d.value()));
        let mut g = [Vec3::zeros(); MAX_PARAMS];
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = Vec3::new(d.x.eps[j], d.y.eps[j], d.z.eps[j]);
        }
        per_vertex.push(g);
    }
    (vertices, MeshTangents { per_vertex, active })
}

/// Apply a 5-DoF pose about the mesh OBB center. Parameter order of the
/// tangents: `[t_x, t_y, t_z, yaw, scale]`.
pub fn apply_pose_regular_with_tangents(
    mesh: &TriMesh,
    p: &PoseParams5,
) -> Result<(TriMesh, MeshTangents)> {
    p.validate()?;
    let pivot = compute_obb(&PointCloud::new(mesh.vertices().to_vec())?)?
        .center
        .coords;
    let translation = DVec3::new(
        Dual::variable(p.translation[0], 0),
        Dual::variable(p.translation[1], 1),
        Dual::variable(p.translation[2], 2),
    );
    let sim = DualSimilarity::new(
        Dual::variable(p.yaw, 3),
        Dual::variable(p.scale, 4),
        pivot,
        translation,
    );
    let duals: Vec<DVec3> = mesh.vertices().iter().map(|v| sim.apply(v.coords)).collect();
    let (vertices, tangents) = collect_tangents(&duals, 5);
    Ok((mesh.with_vertices(vertices), tangents))
}

/// 5-DoF pose application (values only).
pub fn apply_pose_regular(mesh: &TriMesh, p: &PoseParams5) -> Result<TriMesh> {
    Ok(apply_pose_regular_with_tangents(mesh, p)?.0)
}

/// Apply a 4-DoF planar pose. The mesh is first mapped into the plane
/// frame and its lowest vertex snapped to local Y = 0; scale and yaw
/// pivot at the bottom-footprint centroid (local Y pivot 0) and the
/// translation acts as `(t_x, 0, t_z)`, so every parameter keeps the
/// object on the plane. Tangent order: `[t_x, t_z, yaw, scale]`.
pub fn apply_pose_planar_with_tangents(
    mesh: &TriMesh,
    p: &PoseParams4,
    plane: &Plane,
) -> Result<(TriMesh, MeshTangents)> {
    p.validate()?;
    let grounded = GroundedMesh::build(mesh, plane);
    let duals = planar_duals(&grounded, p);
    let frame = crate::scene::plane_local_frame(plane);
    let rot = *frame.rotation();
    let tr = frame.translation();
    let world: Vec<DVec3> = duals
        .iter()
        .map(|d| {
            // Constant frame: rotate the dual vector by rows.
            let x = d.x * rot[(0, 0)] + d.y * rot[(0, 1)] + d.z * rot[(0, 2)];
            let y = d.x * rot[(1, 0)] + d.y * rot[(1, 1)] + d.z * rot[(1, 2)];
            let z = d.x * rot[(2, 0)] + d.y * rot[(2, 1)] + d.z * rot[(2, 2)];
            DVec3::new(
                x + Dual::constant(tr.x),
                y + Dual::constant(tr.y),
                z + Dual::constant(tr.z),
            )
        })
        .collect();
    let (vertices, tangents) = collect_tangents(&world, 4);
    Ok((mesh.with_vertices(vertices), tangents))
}

fn planar_duals(grounded: &GroundedMesh, p: &PoseParams4) -> Vec<DVec3> {
    let pivot = Vec3::new(grounded.footprint.0, 0.0, grounded.footprint.1);
    let translation = DVec3::new(
        Dual::variable(p.t_x, 0),
        Dual::constant(0.0),
        Dual::variable(p.t_z, 1),
    );
    let sim = DualSimilarity::new(
        Dual::variable(p.yaw, 2),
        Dual::variable(p.scale, 3),
        pivot,
        translation,
    );
    grounded.local.iter().map(|v| sim.apply(v.coords)).collect()
}

/// 4-DoF pose application (values only).
pub fn apply_pose_planar(mesh: &TriMesh, p: &PoseParams4, plane: &Plane) -> Result<TriMesh> {
    Ok(apply_pose_planar_with_tangents(mesh, p, plane)?.0)
}

/// Learning-rate schedule of the fitting loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Cosine decay from `learning_rate` to `final_lr`.
    Cosine { final_lr: f64 },
    /// Per-iteration multiplicative decay.
    Multiplicative { factor: f64 },
    Constant,
}

/// Fitting-loop configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_decay: LrSchedule,
    pub weights: LossWeights,
    pub raster: SoftRasterConfig,
    /// Best-loss improvements below this are ignored by early stopping.
    pub early_stop_eps: f64,
    /// Stop after this many iterations without improvement.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Also fit from yaw + pi and keep the lower loss (silhouettes are
    /// nearly 180-degree ambiguous).
    pub restarts_180: bool,
    /// Target clouds larger than this are subsampled (seeded).
    pub max_target_points: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 300,
            learning_rate: 0.05,
            lr_decay: LrSchedule::Cosine { final_lr: 0.005 },
            weights: LossWeights::default(),
            raster: SoftRasterConfig::default(),
            early_stop_eps: 1e-6,
            early_stop_patience: 30,
            seed: 0,
            restarts_180: true,
            max_target_points: 5000,
        }
    }
}

impl OptimizerConfig {
    fn lr_at(&self, iter: usize) -> f64 {
        match self.lr_decay {
            LrSchedule::Cosine { final_lr } => {
                if self.iterations <= 1 {
                    return self.learning_rate;
                }
                let t = iter as f64 / (self.iterations - 1) as f64;
                final_lr
                    + 0.5 * (self.learning_rate - final_lr)
                        * (1.0 + (std::f64::consts::PI * t).cos())
            }
            LrSchedule::Multiplicative { factor } => {
                self.learning_rate * factor.powi(iter as i32)
            }
            LrSchedule::Constant => self.learning_rate,
        }
    }
}

/// The object being placed.
pub struct FitObject<'a> {
    pub mesh: &'a TriMesh,
    pub mask: &'a BinaryMask,
    pub target: &'a PointCloud,
}

/// Shared scene context.
pub struct FitScene<'a> {
    pub camera: &'a Camera,
    pub plane: Option<&'a Plane>,
    pub bg_bounds: Option<&'a Aabb>,
}

/// How a fit ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    MaxIterations,
    EarlyStopped,
    /// Loss or gradient became non-finite; best-so-far returned.
    AbortedNonFinite,
}

/// Outcome of a pose fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub pose: FittedPose,
    /// Mesh transformed by the best pose.
    pub mesh: TriMesh,
    /// Per-iteration loss of the winning restart.
    pub history: Vec<LossBreakdown>,
    pub variant: PoseVariant,
    pub wall_time: Duration,
    pub status: FitStatus,
    /// True when no iteration improved on the initial loss.
    pub non_improved: bool,
    pub best_iteration: usize,
    /// Planar fits: max |min plane-local Y| observed across iterations.
    pub max_ground_deviation: Option<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

enum Model<'a> {
    Regular {
        mesh: &'a TriMesh,
        pivot: Vec3,
    },
    Planar {
        mesh: &'a TriMesh,
        grounded: GroundedMesh,
        plane: &'a Plane,
    },
}

impl<'a> Model<'a> {
    fn dim(&self) -> usize {
        match self {
            Model::Regular { .. } => 5,
            Model::Planar { .. } => 4,
        }
    }

    /// theta layout: translations..., yaw, ln(scale).
    fn theta_from(&self, pose: &FittedPose) -> Result<Vec<f64>> {
        match (self, pose) {
            (Model::Regular { .. }, FittedPose::Regular5(p)) => {
                p.validate()?;
                Ok(vec![
                    p.translation[0],
                    p.translation[1],
                    p.translation[2],
                    p.yaw,
                    p.scale.ln(),
                ])
            }
            (Model::Planar { .. }, FittedPose::Planar4(p)) => {
                p.validate()?;
                Ok(vec![p.t_x, p.t_z, p.yaw, p.scale.ln()])
            }
            _ => Err(CoreError::InvalidParameter(
                "pose variant does not match the fit model".into(),
            )),
        }
    }

    fn pose_from(&self, theta: &[f64]) -> FittedPose {
        match self {
            Model::Regular { .. } => FittedPose::Regular5(PoseParams5 {
                translation: [theta[0], theta[1], theta[2]],
                yaw: theta[3],
                scale: theta[4].exp(),
            }),
            Model::Planar { .. } => FittedPose::Planar4(PoseParams4 {
                t_x: theta[0],
                t_z: theta[1],
                yaw: theta[2],
                scale: theta[3].exp(),
            }),
        }
    }

    fn apply(&self, theta: &[f64]) -> Result<(TriMesh, MeshTangents)> {
        match self {
            Model::Regular { mesh, pivot } => {
                let translation = DVec3::new(
                    Dual::variable(theta[0], 0),
                    Dual::variable(theta[1], 1),
                    Dual::variable(theta[2], 2),
                );
                let sim = DualSimilarity::new(
                    Dual::variable(theta[3], 3),
                    Dual::variable(theta[4].exp(), 4),
                    *pivot,
                    translation,
                );
                let duals: Vec<DVec3> =
                    mesh.vertices().iter().map(|v| sim.apply(v.coords)).collect();
                let (vertices, tangents) = collect_tangents(&duals, 5);
                Ok((mesh.with_vertices(vertices), tangents))
            }
            Model::Planar {
                mesh,
                grounded,
                plane,
            } => {
                let p = PoseParams4 {
                    t_x: theta[0],
                    t_z: theta[1],
                    yaw: theta[2],
                    scale: theta[3].exp(),
                };
                let duals = planar_duals(grounded, &p);
                let frame = crate::scene::plane_local_frame(plane);
                let rot = *frame.rotation();
                let tr = frame.translation();
                let world: Vec<DVec3> = duals
                    .iter()
                    .map(|d| {
                        let x = d.x * rot[(0, 0)] + d.y * rot[(0, 1)] + d.z * rot[(0, 2)];
                        let y = d.x * rot[(1, 0)] + d.y * rot[(1, 1)] + d.z * rot[(1, 2)];
                        let z = d.x * rot[(2, 0)] + d.y * rot[(2, 1)] + d.z * rot[(2, 2)];
                        DVec3::new(
                            x + Dual::constant(tr.x),
                            y + Dual::constant(tr.y),
                            z + Dual::constant(tr.z),
                        )
                    })
                    .collect();
                let (vertices, tangents) = collect_tangents(&world, 4);
                Ok((mesh.with_vertices(vertices), tangents))
            }
        }
    }

    /// Convert a gradient over natural parameters (tangent layout of
    /// `apply`) into the theta layout (chain rule for ln s).
    fn grad_to_theta(&self, natural: &[f64], theta: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let mut g = natural[..k].to_vec();
        g[k - 1] *= theta[k - 1].exp();
        g
    }
}

struct RestartOutcome {
    theta: Vec<f64>,
    best_total: f64,
    best_iteration: usize,
    history: Vec<LossBreakdown>,
    status: FitStatus,
    max_ground_deviation: Option<f64>,
}

/// Fit a pose by adaptive-moment gradient descent from `init`.
///
/// Deterministic for a fixed seed and independent of thread count. When
/// `restarts_180` is set the fit also runs from yaw + pi and the lower
/// best loss wins.
pub fn fit_pose(
    object: &FitObject,
    scene: &FitScene,
    init: &FittedPose,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    let start = Instant::now();
    cfg.weights.validate()?;
    if cfg.iterations == 0 || cfg.learning_rate <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "optimizer needs iterations >= 1 and learning_rate > 0".into(),
        ));
    }

    let model = match init {
        FittedPose::Regular5(_) => Model::Regular {
            mesh: object.mesh,
            pivot: compute_obb(&PointCloud::new(object.mesh.vertices().to_vec())?)?
                .center
                .coords,
        },
        FittedPose::Planar4(_) => {
            let plane = scene.plane.ok_or(CoreError::MissingPlane)?;
            Model::Planar {
                mesh: object.mesh,
                grounded: GroundedMesh::build(object.mesh, plane),
                plane,
            }
        }
    };

    // Deterministic target subsample keeps per-iteration cost bounded.
    let target_storage;
    let target: &PointCloud = if object.target.len() > cfg.max_target_points {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut pts = object.target.points().to_vec();
        pts.shuffle(&mut rng);
        pts.truncate(cfg.max_target_points);
        target_storage = PointCloud::new(pts)?;
        &target_storage
    } else {
        object.target
    };

    let theta0 = model.theta_from(init)?;
    let mut starts = vec![theta0.clone()];
    if cfg.restarts_180 {
        let mut flipped = theta0.clone();
        let yaw_slot = model.dim() - 2;
        flipped[yaw_slot] += std::f64::consts::PI;
        starts.push(flipped);
    }

    let mut best: Option<RestartOutcome> = None;
    for theta_start in starts {
        let outcome = run_restart(&model, object, scene, target, cfg, theta_start)?;
        let better = match &best {
            None => true,
            Some(b) => outcome.best_total < b.best_total,
        };
        if better {
            best = Some(outcome);
        }
    }
    let outcome = best.expect("at least one restart");

    let (mesh, _) = model.apply(&outcome.theta)?;
    let initial_total = outcome
        .history
        .first()
        .map(|h| h.total)
        .unwrap_or(f64::INFINITY);
    Ok(FitResult {
        pose: model.pose_from(&outcome.theta),
        mesh,
        non_improved: !(outcome.best_total < initial_total),
        history: outcome.history,
        variant: init.variant(),
        wall_time: start.elapsed(),
        status: outcome.status,
        best_iteration: outcome.best_iteration,
        max_ground_deviation: outcome.max_ground_deviation,
    })
}

fn run_restart(
    model: &Model,
    object: &FitObject,
    scene: &FitScene,
    target: &PointCloud,
    cfg: &OptimizerConfig,
    mut theta: Vec<f64>,
) -> Result<RestartOutcome> {
    let k = model.dim();
    let mut m = vec![0.0; k];
    let mut v = vec![0.0; k];
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(cfg.iterations);
    let mut best_theta = theta.clone();
    let mut best_total = f64::INFINITY;
    let mut best_iteration = 0usize;
    let mut since_improvement = 0usize;
    let mut status = FitStatus::MaxIterations;
    let mut max_ground_deviation: Option<f64> = None;

    for iter in 0..cfg.iterations {
        let (mesh, tangents) = model.apply(&theta)?;

        if let Model::Planar { plane, .. } = model {
            let min_y = mesh
                .vertices()
                .iter()
                .map(|p| plane.to_local(p).y)
                .fold(f64::INFINITY, f64::min);
            let dev = min_y.abs();
            max_ground_deviation =
                Some(max_ground_deviation.map_or(dev, |d: f64| d.max(dev)));
        }

        let pm = render_soft_silhouette(&mesh, scene.camera, &cfg.raster, Some(&tangents))?;
        let breakdown = match total_loss(
            &LossInputs {
                pred: &pm,
                target_mask: object.mask,
                target_cloud: target,
                mesh: &mesh,
                tangents: Some(&tangents),
                bbox: scene.bg_bounds,
            },
            &cfg.weights,
        ) {
            Ok(b) => b,
            Err(CoreError::NonFinite(_)) => {
                status = FitStatus::AbortedNonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        if !breakdown.total.is_finite() || breakdown.gradient.iter().any(|g| !g.is_finite()) {
            status = FitStatus::AbortedNonFinite;
            history.push(breakdown);
            break;
        }

        if breakdown.total < best_total - cfg.early_stop_eps {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if breakdown.total < best_total {
            best_total = breakdown.total;
            best_theta = theta.clone();
            best_iteration = iter;
        }
        let grad = model.grad_to_theta(&breakdown.gradient, &theta);
        history.push(breakdown);

        if since_improvement > cfg.early_stop_patience {
            status = FitStatus::EarlyStopped;
            break;
        }

        // Bias-corrected adaptive-moment step.
        let lr = cfg.lr_at(iter);
        let t = (iter + 1) as i32;
        for i in 0..k {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v[i] / (1.0 - ADAM_BETA2.powi(t));
            theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    Ok(RestartOutcome {
        theta: best_theta,
        best_total,
        best_iteration,
        history,
        status,
        max_ground_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_y;
    use crate::math::RigidTransform;

    #[test]
    fn select_model_rules() {
        let mut obj = BinaryMask::filled(8, 8, false);
        let mut floor = BinaryMask::filled(8, 8, false);
        for x in 0..4 {
            obj.set(x, 3, true);
            floor.set(x, 4, true);
        }
        // Adjacent rows do not intersect without dilation.
        assert_eq!(select_model(&obj, &floor, 0).unwrap(), PoseVariant::Regular5);
        assert_eq!(select_model(&obj, &floor, 1).unwrap(), PoseVariant::Planar4);

        let mut overlapping = floor.clone();
        overlapping.set(0, 3, true);
        assert_eq!(
            select_model(&obj, &overlapping, 0).unwrap(),
            PoseVariant::Planar4
        );

        // 2 px gap closed by dilation 3.
        let mut a = BinaryMask::filled(16, 4, false);
        let mut b = BinaryMask::filled(16, 4, false);
        for y in 0..4 {
            for x in 0..3 {
                a.set(x, y, true);
            }
            for x in 5..8 {
                b.set(x, y, true);
            }
        }
        assert_eq!(select_model(&a, &b, 0).unwrap(), PoseVariant::Regular5);
        assert_eq!(select_model(&a, &b, 3).unwrap(), PoseVariant::Planar4);
    }

    fn sampled(mesh: &TriMesh, seed: u64) -> PointCloud {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(mesh.sample_surface(2000, &mut rng).unwrap()).unwrap()
    }

    #[test]
    fn init_regular_self_alignment() {
        let mesh = TriMesh::cuboid(Pt3::new(0.2, 0.1, -0.3), 1.2, 0.7, 0.5);
        let target = sampled(&mesh, 1);
        let p = init_regular(&mesh, &target).unwrap();
        assert!((p.scale - 1.0).abs() < 0.05, "scale {}", p.scale);
        assert!(
            Vec3::new(p.translation[0], p.translation[1], p.translation[2]).norm() < 0.05,
            "t {:?}",
            p.translation
        );
        assert!(p.yaw.abs() < 0.05, "yaw {}", p.yaw);
    }

    #[test]
    fn init_regular_scaled_and_shifted() {
        let mesh = TriMesh::cuboid(Pt3::origin(), 1.0, 0.6, 0.4);
        let doubled = TriMesh::cuboid(Pt3::origin(), 2.0, 1.2, 0.8);
        let p = init_regular(&mesh, &sampled(&doubled, 2)).unwrap();
        assert!((p.scale - 2.0).abs() / 2.0 < 0.05, "scale {}", p.scale);

        let shifted = TriMesh::cuboid(Pt3::new(1.0, 0.0, 0.0), 1.0, 0.6, 0.4);
        // Use exact vertices so the OBB centers match to high precision.
        let target = PointCloud::new(shifted.vertices().to_vec()).unwrap();
        let p = init_regular(&mesh, &target).unwrap();
        let t = Vec3::new(p.translation[0], p.translation[1], p.translation[2]);
        assert!((t - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-3, "t {t:?}");
    }

    #[test]
    fn init_planar_grounds_bottom_vertices() {
        let plane = Plane::new(Vec3::y(), Pt3::origin()).unwrap();
        // Cube floating at world y in [0.3, 1.3].
        let mesh = TriMesh::cuboid(Pt3::new(0.0, 0.8, 0.0), 1.0, 1.0, 1.0);
        let target = sampled(&TriMesh::cuboid(Pt3::new(0.0, 0.5, 0.0), 1.0, 1.0, 1.0), 3);
        let p = init_planar(&mesh, &plane, &target).unwrap();
        let posed = apply_pose_planar(&mesh, &p, &plane).unwrap();
        let min_y = posed
            .vertices()
            .iter()
            .map(|v| plane.to_local(v).y)
            .fold(f64::INFINITY, f64::min);
        assert!(min_y.abs() <= 1e-9, "min local y {min_y}");
    }

    #[test]
    fn init_planar_centers_footprint_on_target() {
        let plane = Plane::new(Vec3::y(), Pt3::origin()).unwrap();
        let mesh = TriMesh::cuboid(Pt3::new(0.0, 0.5, 0.0), 1.0, 1.0, 1.0);
        // Identical cube moved to (2, *, 3).
        let target_mesh = TriMesh::cuboid(Pt3::new(2.0, 0.5, 3.0), 1.0, 1.0, 1.0);
        let target = PointCloud::new(target_mesh.vertices().to_vec()).unwrap();
        let p = init_planar(&mesh, &plane, &target).unwrap();
        let posed = apply_pose_planar(&mesh, &p, &plane).unwrap();
        // Footprint center of the posed cube.
        let bottom: Vec<Pt3> = posed
            .vertices()
            .iter()
            .filter(|v| plane.to_local(v).y.abs() < 1e-6)
            .copied()
            .collect();
        let cx = bottom.iter().map(|v| v.x).sum::<f64>() / bottom.len() as f64;
        let cz = bottom.iter().map(|v| v.z).sum::<f64>() / bottom.len() as f64;
        assert!((cx - 2.0).abs() < 1e-6, "cx {cx}");
        assert!((cz - 3.0).abs() < 1e-6, "cz {cz}");
    }

    #[test]
    fn init_planar_tilted_plane_contact() {
        let a = 10f64.to_radians();
        let plane = Plane::new(Vec3::new(0.0, a.cos(), a.sin()), Pt3::new(0.0, 0.1, 0.0)).unwrap();
        let mesh = TriMesh::cuboid(Pt3::new(0.3, 1.0, -0.2), 0.8, 0.5, 0.6);
        let target = sampled(&mesh, 4);
        let p = init_planar(&mesh, &plane, &target).unwrap();
        let posed = apply_pose_planar(&mesh, &p, &plane).unwrap();
        let min_dist = posed
            .vertices()
            .iter()
            .map(|v| plane.signed_distance(v))
            .fold(f64::INFINITY, f64::min);
        assert!(min_dist.abs() <= 1e-9, "bottom distance {min_dist}");
    }

    #[test]
    fn apply_regular_identity_bit_exact() {
        let mesh = TriMesh::cuboid(Pt3::new(0.123, -0.456, 0.789), 1.3, 0.7, 0.9);
        let out = apply_pose_regular(&mesh, &PoseParams5::identity()).unwrap();
        for (a, b) in mesh.vertices().iter().zip(out.vertices()) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
    }

    #[test]
    fn apply_regular_scale_and_yaw_hand_cases() {
        // One vertex at (1,0,0) with pivot at the origin: build a thin
        // tetrahedron whose OBB center is the origin by symmetry.
        let mesh = TriMesh::new(
            vec![
                Pt3::new(1.0, 0.0, 0.0),
                Pt3::new(-1.0, 0.0, 0.0),
                Pt3::new(0.0, 1.0, 0.0),
                Pt3::new(0.0, -1.0, 0.0),
                Pt3::new(0.0, 0.0, 1.0),
                Pt3::new(0.0, 0.0, -1.0),
            ],
            vec![[0, 2, 4], [1, 3, 5], [0, 3, 4], [1, 2, 5]],
        )
        .unwrap();
        let scaled = apply_pose_regular(
            &mesh,
            &PoseParams5 {
                translation: [0.0; 3],
                yaw: 0.0,
                scale: 2.0,
            },
        )
        .unwrap();
        assert!((scaled.vertices()[0] - Pt3::new(2.0, 0.0, 0.0)).norm() < 1e-12);

        let yawed = apply_pose_regular(
            &mesh,
            &PoseParams5 {
                translation: [0.0; 3],
                yaw: std::f64::consts::FRAC_PI_2,
                scale: 1.0,
            },
        )
        .unwrap();
        assert!((yawed.vertices()[0] - Pt3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn apply_planar_identity_and_translation() {
        let plane = Plane::new(Vec3::y(), Pt3::origin()).unwrap();
        // Grounded cube: bottom exactly at y = 0.
        let mesh = TriMesh::cuboid(Pt3::new(0.25, 0.5, -0.75), 1.0, 1.0, 1.0);
        let out = apply_pose_planar(&mesh, &PoseParams4::identity(), &plane).unwrap();
        for (a, b) in mesh.vertices().iter().zip(out.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }

        let t = apply_pose_planar(
            &mesh,
            &PoseParams4 {
                t_x: 1.0,
                t_z: 2.0,
                yaw: 0.0,
                scale: 1.0,
            },
            &plane,
        )
        .unwrap();
        for (a, b) in mesh.vertices().iter().zip(t.vertices()) {
            let d = b - a;
            assert!((d - Vec3::new(1.0, 0.0, 2.0)).norm() < 1e-12, "delta {d:?}");
        }
    }

    #[test]
    fn apply_planar_preserves_ground_contact() {
        let a = 17f64.to_radians();
        let plane =
            Plane::new(Vec3::new(a.sin(), a.cos(), 0.0), Pt3::new(0.2, -0.1, 0.4)).unwrap();
        let mesh = TriMesh::cuboid(Pt3::new(1.0, 2.0, -0.5), 0.9, 1.4, 0.7);
        for (s, r) in [(0.5, 0.0), (2.0, 0.0), (0.5, 1.0), (2.0, 1.0), (1.3, -0.7)] {
            let p = PoseParams4 {
                t_x: 0.3,
                t_z: -1.1,
                yaw: r,
                scale: s,
            };
            let posed = apply_pose_planar(&mesh, &p, &plane).unwrap();
            let min_y = posed
                .vertices()
                .iter()
                .map(|v| plane.to_local(v).y)
                .fold(f64::INFINITY, f64::min);
            assert!(min_y.abs() <= 1e-9, "s={s} r={r}: min local y {min_y}");
        }
    }

    #[test]
    fn planar_matches_regular_on_flat_mesh() {
        // A flat plate in y = 0 with vertex mean equal to its extent
        // center, so the two models share their pivot; then Planar4 on
        // the identity frame must equal Regular5 restricted to t_y = 0.
        let plane = Plane::new(Vec3::y(), Pt3::origin()).unwrap();
        let mesh = TriMesh::new(
            vec![
                Pt3::new(-0.6, 0.0, -0.4),
                Pt3::new(0.6, 0.0, -0.4),
                Pt3::new(0.6, 0.0, 0.4),
                Pt3::new(-0.6, 0.0, 0.4),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        for (tx, tz, yaw, s) in [
            (0.0, 0.0, 0.0, 1.0),
            (0.5, -0.3, 0.8, 1.4),
            (-1.0, 2.0, -2.4, 0.6),
        ] {
            let planar = apply_pose_planar(
                &mesh,
                &PoseParams4 {
                    t_x: tx,
                    t_z: tz,
                    yaw,
                    scale: s,
                },
                &plane,
            )
            .unwrap();
            let regular = apply_pose_regular(
                &mesh,
                &PoseParams5 {
                    translation: [tx, 0.0, tz],
                    yaw,
                    scale: s,
                },
            )
            .unwrap();
            for (a, b) in planar.vertices().iter().zip(regular.vertices()) {
                assert!((a - b).norm() < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn regular_y_translation_keeps_bbox_loss_bits() {
        let mesh = TriMesh::cuboid(Pt3::new(2.0, 0.5, 0.0), 1.0, 1.0, 1.0);
        let bbox = Aabb::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).unwrap();
        let base = apply_pose_regular(&mesh, &PoseParams5::identity()).unwrap();
        let l0 = crate::loss::bbox_loss(base.vertices(), None, &bbox).re;
        for dy in [-3.0, 0.4, 12.5] {
            let moved = apply_pose_regular(
                &mesh,
                &PoseParams5 {
                    translation: [0.0, dy, 0.0],
                    yaw: 0.0,
                    scale: 1.0,
                },
            )
            .unwrap();
            let l = crate::loss::bbox_loss(moved.vertices(), None, &bbox).re;
            assert_eq!(l.to_bits(), l0.to_bits());
        }
    }

    #[test]
    fn apply_tangents_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mesh = TriMesh::cuboid(Pt3::new(0.3, 0.6, -0.2), 1.1, 0.8, 0.5);
        let plane =
            Plane::new(Vec3::new(0.05, 1.0, -0.03), Pt3::new(0.0, -0.02, 0.0)).unwrap();
        let h = 1e-6;
        // Scalar probe with per-vertex weights so no derivative cancels
        // by mesh symmetry.
        let probe = |m: &TriMesh| -> f64 {
            m.vertices()
                .iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * (v.x + 2.0 * v.y - 0.5 * v.z))
                .sum()
        };
        for _ in 0..20 {
            let p5 = PoseParams5 {
                translation: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
                yaw: rng.gen_range(-2.0..2.0),
                scale: rng.gen_range(0.5..2.0),
            };
            let (_, tangents) = apply_pose_regular_with_tangents(&mesh, &p5).unwrap();
            let ad: Vec<f64> = (0..5)
                .map(|j| {
                    tangents
                        .per_vertex
                        .iter()
                        .enumerate()
                        .map(|(i, g)| (i + 1) as f64 * (g[j].x + 2.0 * g[j].y - 0.5 * g[j].z))
                        .sum()
                })
                .collect();
            for j in 0..5 {
                let mut lo = p5;
                let mut hi = p5;
                match j {
                    0 => {
                        lo.translation[0] -= h;
                        hi.translation[0] += h;
                    }
                    1 => {
                        lo.translation[1] -= h;
                        hi.translation[1] += h;
                    }
                    2 => {
                        lo.translation[2] -= h;
                        hi.translation[2] += h;
                    }
                    3 => {
                        lo.yaw -= h;
                        hi.yaw += h;
                    }
                    _ => {
                        lo.scale -= h;
                        hi.scale += h;
                    }
                }
                let fd = (probe(&apply_pose_regular(&mesh, &hi).unwrap())
                    - probe(&apply_pose_regular(&mesh, &lo).unwrap()))
                    / (2.0 * h);
                let rel = (ad[j] - fd).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-3, "regular slot {j}: ad {} fd {fd}", ad[j]);
            }

            let p4 = PoseParams4 {
                t_x: rng.gen_range(-1.0..1.0),
                t_z: rng.gen_range(-1.0..1.0),
                yaw: rng.gen_range(-2.0..2.0),
                scale: rng.gen_range(0.5..2.0),
            };
            let (_, tangents) = apply_pose_planar_with_tangents(&mesh, &p4, &plane).unwrap();
            let ad: Vec<f64> = (0..4)
                .map(|j| {
                    tangents
                        .per_vertex
                        .iter()
                        .enumerate()
                        .map(|(i, g)| (i + 1) as f64 * (g[j].x + 2.0 * g[j].y - 0.5 * g[j].z))
                        .sum()
                })
                .collect();
            for j in 0..4 {
                let mut lo = p4;
                let mut hi = p4;
                match j {
                    0 => {
                        lo.t_x -= h;
                        hi.t_x += h;
                    }
                    1 => {
                        lo.t_z -= h;
                        hi.t_z += h;
                    }
                    2 => {
                        lo.yaw -= h;
                        hi.yaw += h;
                    }
                    _ => {
                        lo.scale -= h;
                        hi.scale += h;
                    }
                }
                let fd = (probe(&apply_pose_planar(&mesh, &hi, &plane).unwrap())
                    - probe(&apply_pose_planar(&mesh, &lo, &plane).unwrap()))
                    / (2.0 * h);
                let rel = (ad[j] - fd).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-3, "planar slot {j}: ad {} fd {fd}", ad[j]);
            }
        }
    }

    #[test]
    fn rotation_pivot_is_obb_center() {
        // Yaw about the OBB center keeps the center fixed.
        let mesh = TriMesh::cuboid(Pt3::new(3.0, 1.0, -2.0), 1.0, 2.0, 0.5);
        let posed = apply_pose_regular(
            &mesh,
            &PoseParams5 {
                translation: [0.0; 3],
                yaw: 1.2,
                scale: 1.7,
            },
        )
        .unwrap();
        let obb = compute_obb(&PointCloud::new(posed.vertices().to_vec()).unwrap()).unwrap();
        assert!((obb.center - Pt3::new(3.0, 1.0, -2.0)).norm() < 1e-9);
    }

    #[test]
    fn identity_yaw_matches_rotation_matrix() {
        // Cross-check the dual similarity against the plain matrix path.
        let mesh = TriMesh::cuboid(Pt3::new(0.4, 0.2, 0.1), 1.0, 0.8, 0.6);
        let yaw = 0.83;
        let posed = apply_pose_regular(
            &mesh,
            &PoseParams5 {
                translation: [0.0; 3],
                yaw,
                scale: 1.0,
            },
        )
        .unwrap();
        let pivot = Vec3::new(0.4, 0.2, 0.1);
        let r = rotation_y(yaw);
        for (v, out) in mesh.vertices().iter().zip(posed.vertices()) {
            let expect = r * (v.coords - pivot) + pivot;
            assert!((out.coords - expect).norm() < 1e-12);
        }
        let _ = RigidTransform::identity();
    }
}
