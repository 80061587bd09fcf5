//! Composite pose-fitting loss: silhouette (Dice + Focal), 3D
//! point-to-mesh, and the background bounding-box regularizer.
//!
//! Every term returns a [`Dual`] so the gradient with respect to the
//! active pose parameters rides along with the value. Reductions use
//! deterministic pairwise-tree summation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::cloud::PointCloud;
use crate::dual::{pairwise_sum, Dual, DVec3, MeshTangents, MAX_PARAMS};
use crate::error::CoreError;
use crate::mask::BinaryMask;
use crate::math::Pt3;
use crate::mesh::TriMesh;
use crate::raster::ProbMap;
use crate::spatial::TriangleBvh;
use crate::Result;

const DICE_EPS: f64 = 1e-6;
const FOCAL_CLAMP: f64 = 1e-6;

/// Scalar weights of the composite loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_sil: f64,
    pub w_3d: f64,
    pub w_bbox: f64,
    pub lambda_dice: f64,
    pub lambda_focal: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_sil: 1.0,
            w_3d: 1.0,
            w_bbox: 0.1,
            lambda_dice: 1.0,
            lambda_focal: 1.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_sil,
            self.w_3d,
            self.w_bbox,
            self.lambda_dice,
            self.lambda_focal,
            self.focal_gamma,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CoreError::InvalidParameter(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "focal_alpha must lie in (0,1), got {}",
                self.focal_alpha
            )));
        }
        if self.w_sil <= 0.0 && self.w_3d <= 0.0 {
            return Err(CoreError::InvalidParameter(
                "at least one of w_sil, w_3d must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term values of one loss evaluation plus the gradient over the
/// active pose parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub silhouette: f64,
    pub geometric: f64,
    pub bbox: f64,
    pub total: f64,
    pub gradient: Vec<f64>,
}

fn check_shape(pred: &ProbMap, target: &BinaryMask) -> Result<()> {
    if pred.width() != target.width() || pred.height() != target.height() {
        return Err(CoreError::ShapeMismatch {
            expected_w: pred.width(),
            expected_h: pred.height(),
            got_w: target.width(),
            got_h: target.height(),
        });
    }
    Ok(())
}

/// Dice loss `1 - (2 sum(p m) + eps) / (sum(p) + sum(m) + eps)`.
pub fn dice_loss(pred: &ProbMap, target: &BinaryMask) -> Result<Dual> {
    check_shape(pred, target)?;
    let n = pred.len();
    let per_pixel: Vec<(Dual, Dual)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = pred.dual_at(i);
            let m = if target.bits()[i] { 1.0 } else { 0.0 };
            (p * m, p)
        })
        .collect();
    let inter: Vec<Dual> = per_pixel.iter().map(|x| x.0).collect();
    let psum: Vec<Dual> = per_pixel.iter().map(|x| x.1).collect();
    let intersection = pairwise_sum(&inter);
    let pred_mass = pairwise_sum(&psum);
    let mask_mass = target.count() as f64;
    let coeff = (intersection * 2.0 + Dual::constant(DICE_EPS))
        / (pred_mass + Dual::constant(mask_mass + DICE_EPS));
    Ok(Dual::constant(1.0) - coeff)
}

/// Focal loss, mean over pixels, prediction clamped to
/// `[1e-6, 1 - 1e-6]`.
pub fn focal_loss(pred: &ProbMap, target: &BinaryMask, alpha: f64, gamma: f64) -> Result<Dual> {
    check_shape(pred, target)?;
    let n = pred.len();
    let terms: Vec<Dual> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = pred.dual_at(i).clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
            let one_minus = Dual::constant(1.0) - p;
            if target.bits()[i] {
                -(one_minus.powf(gamma) * p.ln()) * alpha
            } else {
                -(p.powf(gamma) * one_minus.ln()) * (1.0 - alpha)
            }
        })
        .collect();
    Ok(pairwise_sum(&terms) * (1.0 / n as f64))
}

/// Mean squared distance from each target point to the nearest mesh
/// triangle. The nearest triangle and barycentric foot are frozen per
/// evaluation; the gradient flows through the vertex tangents.
pub fn point_to_mesh_loss(
    targets: &PointCloud,
    mesh: &TriMesh,
    tangents: Option<&MeshTangents>,
) -> Result<Dual> {
    if targets.is_empty() {
        return Err(CoreError::EmptyInput("point_to_mesh_loss targets"));
    }
    if mesh.is_empty() {
        return Err(CoreError::EmptyMesh);
    }
    let bvh = TriangleBvh::build(mesh);
    let dual_vertex = |i: usize| -> DVec3 {
        let v = mesh.vertices()[i].coords;
        match tangents {
            Some(t) => {
                let g = &t.per_vertex[i];
                let mut dx = [0.0; MAX_PARAMS];
                let mut dy = [0.0; MAX_PARAMS];
                let mut dz = [0.0; MAX_PARAMS];
                for j in 0..MAX_PARAMS {
                    dx[j] = g[j].x;
                    dy[j] = g[j].y;
                    dz[j] = g[j].z;
                }
                DVec3::from_parts(v, dx, dy, dz)
            }
            None => DVec3::constant(v),
        }
    };
    let per_point: Vec<Dual> = targets
        .points()
        .par_iter()
        .map(|p| {
            let hit = bvh.nearest(p);
            let [ia, ib, ic] = mesh.faces()[hit.face];
            let w = hit.barycentric;
            let foot = dual_vertex(ia).scale(Dual::constant(w[0]))
                + dual_vertex(ib).scale(Dual::constant(w[1]))
                + dual_vertex(ic).scale(Dual::constant(w[2]));
            (DVec3::constant(p.coords) - foot).norm_squared()
        })
        .collect();
    Ok(pairwise_sum(&per_point) * (1.0 / targets.len() as f64))
}

/// Hinge-squared penalty for vertices outside the background box on the
/// X and Z axes; Y is exempt so objects can rest on the floor.
pub fn bbox_loss(vertices: &[Pt3], tangents: Option<&MeshTangents>, bbox: &Aabb) -> Dual {
    if vertices.is_empty() {
        return Dual::constant(0.0);
    }
    let terms: Vec<Dual> = vertices
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut acc = Dual::constant(0.0);
            for axis in [0usize, 2] {
                let coord = match tangents {
                    Some(t) => {
                        let mut eps = [0.0; MAX_PARAMS];
                        for j in 0..MAX_PARAMS {
                            eps[j] = t.per_vertex[i][j][axis];
                        }
                        Dual::new(v[axis], eps)
                    }
                    None => Dual::constant(v[axis]),
                };
                let over = (coord - Dual::constant(bbox.max[axis])).relu();
                let under = (Dual::constant(bbox.min[axis]) - coord).relu();
                acc = acc + over.square() + under.square();
            }
            acc
        })
        .collect();
    pairwise_sum(&terms) * (1.0 / vertices.len() as f64)
}

/// Everything [`total_loss`] needs about the transformed object.
pub struct LossInputs<'a> {
    pub pred: &'a ProbMap,
    pub target_mask: &'a BinaryMask,
    pub target_cloud: &'a PointCloud,
    pub mesh: &'a TriMesh,
    pub tangents: Option<&'a MeshTangents>,
    pub bbox: Option<&'a Aabb>,
}

/// Weighted composite loss with its gradient over the active parameters.
pub fn total_loss(inputs: &LossInputs, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    let dice = dice_loss(inputs.pred, inputs.target_mask)?;
    let focal = focal_loss(
        inputs.pred,
        inputs.target_mask,
        weights.focal_alpha,
        weights.focal_gamma,
    )?;
    let silhouette = dice * weights.lambda_dice + focal * weights.lambda_focal;

    let geometric = if !inputs.target_cloud.is_empty() && !inputs.mesh.is_empty() {
        point_to_mesh_loss(inputs.target_cloud, inputs.mesh, inputs.tangents)?
    } else if weights.w_3d == 0.0 {
        Dual::constant(0.0)
    } else {
        return Err(CoreError::EmptyInput("total_loss target cloud"));
    };

    let bbox = match inputs.bbox {
        Some(b) => bbox_loss(inputs.mesh.vertices(), inputs.tangents, b),
        None => Dual::constant(0.0),
    };

    let total = silhouette * weights.w_sil + geometric * weights.w_3d + bbox * weights.w_bbox;
    if !total.is_finite() {
        return Err(CoreError::NonFinite("total_loss"));
    }
    let active = inputs
        .tangents
        .map(|t| t.active)
        .unwrap_or(inputs.pred.active_params());
    Ok(LossBreakdown {
        silhouette: silhouette.re,
        geometric: geometric.re,
        bbox: bbox.re,
        total: total.re,
        gradient: total.eps[..active].to_vec(),
    })
}
