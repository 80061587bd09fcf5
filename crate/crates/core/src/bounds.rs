//! Axis-aligned and oriented bounding volumes.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::CoreError;
use crate::math::{Mat3, Pt3, Vec3};
use crate::Result;

/// Axis-aligned box, componentwise `min <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if min.iter().zip(max.iter()).any(|(a, b)| a > b) {
            return Err(CoreError::InvalidParameter(format!(
                "aabb min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min_pt(&self) -> Pt3 {
        Pt3::new(self.min[0], self.min[1], self.min[2])
    }

    pub fn max_pt(&self) -> Pt3 {
        Pt3::new(self.max[0], self.max[1], self.max[2])
    }

    pub fn diagonal(&self) -> f64 {
        (self.max_pt() - self.min_pt()).norm()
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    pub fn contains(&self, p: &Pt3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Overlapping region, or `None` when disjoint.
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            min[a] = self.min[a].max(other.min[a]);
            max[a] = self.max[a].min(other.max[a]);
            if min[a] > max[a] {
                return None;
            }
        }
        Some(Aabb { min, max })
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            min[a] = self.min[a].min(other.min[a]);
            max[a] = self.max[a].max(other.max[a]);
        }
        Aabb { min, max }
    }
}

/// Oriented box: orthonormal axes (columns), non-negative half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Pt3,
    pub axes: Mat3,
    pub half_extents: Vec3,
}

impl Obb {
    pub fn axis(&self, i: usize) -> Vec3 {
        self.axes.column(i).into_owned()
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    pub fn contains(&self, p: &Pt3, tol: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|i| self.axis(i).dot(&d).abs() <= self.half_extents[i] + tol)
    }

    /// Largest half extent (the box's principal size).
    pub fn max_extent(&self) -> f64 {
        self.half_extents.amax()
    }
}

/// Componentwise min/max box of a cloud.
pub fn compute_aabb(points: &PointCloud) -> Result<Aabb> {
    if points.is_empty() {
        return Err(CoreError::EmptyInput("compute_aabb"));
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in points.points() {
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    Ok(Aabb { min, max })
}

/// Covariance-eigenbasis oriented bounding box.
///
/// Axes are the eigenvectors of the point covariance, reordered by
/// descending extent along each axis. Rank-deficient inputs (coplanar or
/// collinear clouds) keep a full orthonormal frame: missing directions are
/// completed by cross products and get zero extent.
pub fn compute_obb(points: &PointCloud) -> Result<Obb> {
    let pts = points.points();
    if pts.is_empty() {
        return Err(CoreError::EmptyInput("compute_obb"));
    }
    let n = pts.len() as f64;
    let centroid = pts.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Mat3::zeros();
    for p in pts {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eigen = SymmetricEigen::new(cov);
    // Eigenvector columns sorted by descending eigenvalue.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).unwrap());
    let v0: Vec3 = eigen.eigenvectors.column(order[0]).into_owned();
    let v1: Vec3 = eigen.eigenvectors.column(order[1]).into_owned();

    // Rebuild a guaranteed-orthonormal right-handed frame.
    let a0 = if v0.norm() > 1e-12 { v0.normalize() } else { Vec3::x() };
    let mut a1 = v1 - a0 * v1.dot(&a0);
    if a1.norm() < 1e-9 {
        a1 = orthogonal_to(&a0);
    }
    let a1 = a1.normalize();
    let a2 = a0.cross(&a1);
    let mut axes = [a0, a1, a2];

    // Tight extents along each axis; the center is the projection midpoint.
    let extents_of = |axes: &[Vec3; 3]| -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for (i, ax) in axes.iter().enumerate() {
                let t = ax.dot(&p.coords);
                lo[i] = lo[i].min(t);
                hi[i] = hi[i].max(t);
            }
        }
        (lo, hi)
    };
    let (lo, hi) = extents_of(&axes);
    let mut spans: Vec<(usize, f64)> = (0..3).map(|i| (i, hi[i] - lo[i])).collect();
    spans.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let reordered = [axes[spans[0].0], axes[spans[1].0], axes[spans[2].0]];
    axes = reordered;
    // Restore right-handedness after the reorder.
    if axes[0].cross(&axes[1]).dot(&axes[2]) < 0.0 {
        axes[2] = -axes[2];
    }

    let (lo, hi) = extents_of(&axes);
    let mut center = Vec3::zeros();
    let mut half = Vec3::zeros();
    for i in 0..3 {
        center += axes[i] * (0.5 * (lo[i] + hi[i]));
        half[i] = 0.5 * (hi[i] - lo[i]);
    }
    Ok(Obb {
        center: Pt3::from(center),
        axes: Mat3::from_columns(&axes),
        half_extents: half,
    })
}

fn orthogonal_to(v: &Vec3) -> Vec3 {
    let candidate = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&candidate)
}
