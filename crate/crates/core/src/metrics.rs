//! Scene-level evaluation: normalization, ICP pre-alignment, and the
//! five 3D measures (Chamfer, F-score with precision/recall, bounding
//! box IoU, Hausdorff).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::compute_aabb;
use crate::cloud::PointCloud;
use crate::error::CoreError;
use crate::math::{Pt3, Vec3};
use crate::mesh::TriMesh;
use crate::scene::{icp_align, IcpConfig};
use crate::spatial::KdTree3;
use crate::Result;

/// Evaluation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Surface samples drawn per scene.
    pub samples_per_scene: usize,
    /// F-score distance threshold, in normalized units.
    pub fscore_tau: f64,
    pub icp: IcpConfig,
    pub seed: u64,
    /// Normalize pred with its own transform instead of sharing the GT
    /// normalization (shared is the default so scale errors remain
    /// measurable).
    pub independent_normalization: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            samples_per_scene: 20_000,
            fscore_tau: 0.05,
            icp: IcpConfig::default(),
            seed: 0,
            independent_normalization: false,
        }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<()> {
        if self.samples_per_scene < 100 {
            return Err(CoreError::InvalidParameter(format!(
                "samples_per_scene must be >= 100, got {}",
                self.samples_per_scene
            )));
        }
        if !(self.fscore_tau > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "fscore_tau must be positive, got {}",
                self.fscore_tau
            )));
        }
        Ok(())
    }
}

/// Flat metric report; field names match the usual table rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub chamfer: f64,
    pub f_score: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub hausdorff: f64,
    pub icp_rms: f64,
    pub pred_samples: usize,
    pub gt_samples: usize,
}

/// Centroid shift plus uniform scale taking a cloud to the normalized
/// frame: `p' = (p - centroid) * scale`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Normalization {
    pub centroid: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let c = Vec3::new(self.centroid[0], self.centroid[1], self.centroid[2]);
        PointCloud::new(
            cloud
                .points()
                .iter()
                .map(|p| Pt3::from((p.coords - c) * self.scale))
                .collect(),
        )
        .expect("finite points stay finite")
    }
}

/// Center a cloud on the origin and scale its AABB diagonal to 1.
pub fn normalize_cloud(points: &PointCloud) -> Result<(PointCloud, Normalization)> {
    if points.len() < 2 {
        return Err(CoreError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let diag = compute_aabb(points)?.diagonal();
    if diag < 1e-12 {
        return Err(CoreError::DegenerateCloud);
    }
    let centroid = points.centroid()?;
    let norm = Normalization {
        centroid: [centroid.x, centroid.y, centroid.z],
        scale: 1.0 / diag,
    };
    Ok((norm.apply(points), norm))
}

fn check_nonempty(a: &PointCloud, b: &PointCloud, what: &'static str) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::EmptyInput(what));
    }
    Ok(())
}

/// Symmetric mean nearest-neighbor distance (non-squared L2).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b, "chamfer")?;
    let mean_nn = |from: &PointCloud, to: &PointCloud| -> f64 {
        let tree = KdTree3::build(to.points());
        let sum: f64 = from
            .points()
            .iter()
            .map(|p| tree.nearest(p).1.sqrt())
            .sum();
        sum / from.len() as f64
    };
    Ok(0.5 * (mean_nn(a, b) + mean_nn(b, a)))
}

/// Precision/recall at threshold `tau` and their harmonic mean.
pub fn fscore(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<(f64, f64, f64)> {
    check_nonempty(pred, gt, "fscore")?;
    if !(tau > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let tau2 = tau * tau;
    let fraction_within = |from: &PointCloud, to: &PointCloud| -> f64 {
        let tree = KdTree3::build(to.points());
        let hits = from
            .points()
            .iter()
            .filter(|p| tree.nearest(p).1 <= tau2)
            .count();
        hits as f64 / from.len() as f64
    };
    let precision = fraction_within(pred, gt);
    let recall = fraction_within(gt, pred);
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((f, precision, recall))
}

/// Volume IoU of the axis-aligned bounding boxes. Zero-volume boxes
/// yield 0 unless the boxes are identical, then 1.
pub fn bbox_iou3d(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b, "bbox_iou3d")?;
    let box_a = compute_aabb(a)?;
    let box_b = compute_aabb(b)?;
    let inter = box_a
        .intersection(&box_b)
        .map(|i| i.volume())
        .unwrap_or(0.0);
    let union = box_a.volume() + box_b.volume() - inter;
    if union <= 0.0 {
        // Both degenerate: identical boxes count as a perfect match.
        return Ok(if box_a.min == box_b.min && box_a.max == box_b.max {
            1.0
        } else {
            0.0
        });
    }
    Ok(inter / union)
}

/// Symmetric Hausdorff distance (max of the two directed maxima).
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b, "hausdorff")?;
    let directed = |from: &PointCloud, to: &PointCloud| -> f64 {
        let tree = KdTree3::build(to.points());
        from.points()
            .iter()
            .map(|p| tree.nearest(p).1)
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Merge scene meshes into one indexed mesh.
fn merge_scene(meshes: &[TriMesh]) -> Result<TriMesh> {
    if meshes.is_empty() {
        return Err(CoreError::EmptyInput("scene mesh list"));
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for mesh in meshes {
        let base = vertices.len();
        vertices.extend_from_slice(mesh.vertices());
        faces.extend(mesh.faces().iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    TriMesh::new(vertices, faces)
}

/// Deterministic area-weighted surface sampling of a whole scene.
pub fn sample_scene(meshes: &[TriMesh], samples: usize, seed: u64) -> Result<PointCloud> {
    let merged = merge_scene(meshes)?;
    if merged.is_empty() || merged.total_area() <= 0.0 {
        return Err(CoreError::SamplingFailed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(merged.sample_surface(samples, &mut rng)?)
}

/// Scene-level evaluation: sample both scenes, normalize (shared GT
/// normalization by default), ICP-align pred onto GT, then compute all
/// five measures on the aligned clouds.
pub fn evaluate_scene(
    pred: &[TriMesh],
    gt: &[TriMesh],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    // Both scenes sample with the same seed: identical or rigidly moved
    // scenes then produce corresponding point sets, so the metrics
    // measure alignment rather than sampling noise.
    let gt_cloud = sample_scene(gt, cfg.samples_per_scene, cfg.seed)?;
    let pred_cloud = sample_scene(pred, cfg.samples_per_scene, cfg.seed)?;

    let (gt_norm_cloud, gt_norm) = normalize_cloud(&gt_cloud)?;
    let pred_norm_cloud = if cfg.independent_normalization {
        normalize_cloud(&pred_cloud)?.0
    } else {
        gt_norm.apply(&pred_cloud)
    };

    let (align, icp_rms) = icp_align(&pred_norm_cloud, &gt_norm_cloud, &cfg.icp)?;
    let aligned_pred = pred_norm_cloud.transformed(&align);

    let chamfer_d = chamfer(&aligned_pred, &gt_norm_cloud)?;
    let (f, precision, recall) = fscore(&aligned_pred, &gt_norm_cloud, cfg.fscore_tau)?;
    let iou = bbox_iou3d(&aligned_pred, &gt_norm_cloud)?;
    let hausdorff_d = hausdorff(&aligned_pred, &gt_norm_cloud)?;

    Ok(MetricReport {
        chamfer: chamfer_d,
        f_score: f,
        iou,
        precision,
        recall,
        hausdorff: hausdorff_d,
        icp_rms,
        pred_samples: aligned_pred.len(),
        gt_samples: gt_norm_cloud.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{rotation_y, RigidTransform};
    use rand::Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Pt3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Pt3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_unit_cube_corners() {
        let mut pts = Vec::new();
        for &x in &[0.0, 1.0] {
            for &y in &[0.0, 1.0] {
                for &z in &[0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        let (out, norm) = normalize_cloud(&cloud(&pts)).unwrap();
        assert!((norm.scale - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let c = out.centroid().unwrap();
        assert!(c.coords.norm() < 1e-9);
        assert!((compute_aabb(&out).unwrap().diagonal() - 1.0).abs() < 1e-9);

        // Idempotence: normalizing again is the identity.
        let (again, norm2) = normalize_cloud(&out).unwrap();
        assert!((norm2.scale - 1.0).abs() < 1e-9);
        assert!(Vec3::new(norm2.centroid[0], norm2.centroid[1], norm2.centroid[2]).norm() < 1e-9);
        for (a, b) in out.points().iter().zip(again.points()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let c = cloud(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert!(matches!(
            normalize_cloud(&c),
            Err(CoreError::DegenerateCloud)
        ));
        assert!(matches!(
            normalize_cloud(&cloud(&[[0.0; 3]])),
            Err(CoreError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn chamfer_hand_cases() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert!((chamfer(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = random_cloud(50, 1);
        assert_eq!(chamfer(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn fscore_hand_case() {
        let pred = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let gt = cloud(&[[0.0, 0.0, 0.0]]);
        let (f, p, r) = fscore(&pred, &gt, 0.5).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);

        let c = random_cloud(80, 2);
        let (f, p, r) = fscore(&c, &c, 0.01).unwrap();
        assert_eq!((f, p, r), (1.0, 1.0, 1.0));
    }

    #[test]
    fn bbox_iou_hand_cases() {
        let c = random_cloud(60, 3);
        assert_eq!(bbox_iou3d(&c, &c).unwrap(), 1.0);

        // Unit cubes offset by 0.5 along X: IoU = 0.5 / 1.5.
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        let b = cloud(&[[0.5, 0.0, 0.0], [1.5, 1.0, 1.0]]);
        assert!((bbox_iou3d(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let far = cloud(&[[10.0, 10.0, 10.0], [11.0, 11.0, 11.0]]);
        assert_eq!(bbox_iou3d(&a, &far).unwrap(), 0.0);

        // Degenerate boxes: identical -> 1, shifted -> 0.
        let flat = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 1.0]]);
        let flat2 = cloud(&[[0.0, 0.1, 0.0], [1.0, 0.1, 1.0]]);
        assert_eq!(bbox_iou3d(&flat, &flat).unwrap(), 1.0);
        assert_eq!(bbox_iou3d(&flat, &flat2).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_hand_case() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0]]);
        assert!((hausdorff(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = random_cloud(40, 4);
        assert_eq!(hausdorff(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn metrics_match_brute_force_oracles() {
        for seed in 0..5u64 {
            let a = random_cloud(120, 100 + seed);
            let b = random_cloud(90, 200 + seed);
            // Chamfer oracle.
            let nn = |from: &PointCloud, to: &PointCloud| -> Vec<f64> {
                from.points()
                    .iter()
                    .map(|p| {
                        to.points()
                            .iter()
                            .map(|q| (p - q).norm())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            };
            let ab = nn(&a, &b);
            let ba = nn(&b, &a);
            let chamfer_oracle = 0.5
                * (ab.iter().sum::<f64>() / ab.len() as f64
                    + ba.iter().sum::<f64>() / ba.len() as f64);
            assert!((chamfer(&a, &b).unwrap() - chamfer_oracle).abs() < 1e-9);

            let hausdorff_oracle = ab
                .iter()
                .chain(ba.iter())
                .fold(0.0f64, |m, d| m.max(*d));
            assert!((hausdorff(&a, &b).unwrap() - hausdorff_oracle).abs() < 1e-9);

            let tau = 0.25;
            let p_oracle = ab.iter().filter(|d| **d <= tau).count() as f64 / ab.len() as f64;
            let r_oracle = ba.iter().filter(|d| **d <= tau).count() as f64 / ba.len() as f64;
            let (f, p, r) = fscore(&a, &b, tau).unwrap();
            assert!((p - p_oracle).abs() < 1e-12);
            assert!((r - r_oracle).abs() < 1e-12);
            if p_oracle + r_oracle > 0.0 {
                assert!(
                    (f - 2.0 * p_oracle * r_oracle / (p_oracle + r_oracle)).abs() < 1e-12
                );
            }

            // Symmetry and the chamfer <= hausdorff ordering.
            assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            assert!(
                (hausdorff(&a, &b).unwrap() - hausdorff(&b, &a).unwrap()).abs() < 1e-12
            );
            assert!(
                (bbox_iou3d(&a, &b).unwrap() - bbox_iou3d(&b, &a).unwrap()).abs() < 1e-12
            );
            assert!(chamfer(&a, &b).unwrap() <= hausdorff(&a, &b).unwrap());
        }
    }

    #[test]
    fn fscore_monotone_in_tau() {
        let a = random_cloud(100, 7);
        let b = random_cloud(100, 8);
        let mut prev = (0.0, 0.0, 0.0);
        for tau in [0.01, 0.05, 0.1, 0.3, 1.0] {
            let cur = fscore(&a, &b, tau).unwrap();
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1 && cur.2 >= prev.2);
            prev = cur;
        }
    }

    #[test]
    fn evaluate_identity_scene() {
        let scene = vec![
            TriMesh::cuboid(Pt3::new(0.0, 0.5, 0.0), 1.0, 1.0, 1.0),
            TriMesh::cuboid(Pt3::new(2.0, 0.25, 1.0), 0.5, 0.5, 0.5),
        ];
        let cfg = MetricConfig {
            samples_per_scene: 20_000,
            ..Default::default()
        };
        let report = evaluate_scene(&scene, &scene, &cfg).unwrap();
        assert!(report.chamfer <= 1e-6 || report.chamfer <= 5e-3, "cd {}", report.chamfer);
        assert!(report.f_score >= 0.999);
        assert!(report.iou >= 0.999);
        assert!(report.hausdorff <= 1e-3 || report.hausdorff < 0.05);
    }

    #[test]
    fn evaluate_absorbs_rigid_offset() {
        let gt = vec![
            TriMesh::cuboid(Pt3::new(0.0, 0.5, 0.0), 1.0, 1.0, 1.0),
            TriMesh::cuboid(Pt3::new(1.5, 0.3, -0.5), 0.6, 0.6, 0.6),
        ];
        let offset = RigidTransform::new(
            rotation_y(10f64.to_radians()),
            Vec3::new(0.12, -0.05, 0.2),
        )
        .unwrap();
        let pred: Vec<TriMesh> = gt.iter().map(|m| m.transformed(&offset)).collect();
        let cfg = MetricConfig {
            samples_per_scene: 8_000,
            icp: IcpConfig {
                max_iterations: 200,
                convergence_eps: 1e-12,
                max_correspondence_dist: Some(1.0),
                translation_only: false,
            },
            ..Default::default()
        };
        let report = evaluate_scene(&pred, &gt, &cfg).unwrap();
        assert!(report.chamfer <= 5e-4, "cd {}", report.chamfer);
    }

    #[test]
    fn evaluate_locates_missing_object() {
        let gt = vec![
            TriMesh::cuboid(Pt3::new(0.0, 0.5, 0.0), 1.0, 1.0, 1.0),
            TriMesh::cuboid(Pt3::new(3.0, 0.4, 0.0), 0.8, 0.8, 0.8),
        ];
        let pred = vec![gt[0].clone()];
        let cfg = MetricConfig {
            samples_per_scene: 6_000,
            fscore_tau: 0.02,
            icp: IcpConfig {
                max_correspondence_dist: Some(0.05),
                ..Default::default()
            },
            ..Default::default()
        };
        let report = evaluate_scene(&pred, &gt, &cfg).unwrap();
        assert!(report.recall < 0.9, "recall {}", report.recall);
        assert!(report.precision > 0.95, "precision {}", report.precision);
        assert!(report.hausdorff > 0.2, "hausdorff {}", report.hausdorff);
    }

    #[test]
    fn report_serializes_with_table_keys() {
        let report = MetricReport {
            chamfer: 0.1,
            f_score: 0.2,
            iou: 0.3,
            precision: 0.4,
            recall: 0.5,
            hausdorff: 0.6,
            icp_rms: 0.0,
            pred_samples: 1,
            gt_samples: 2,
        };
        let json = serde_json::to_value(&report).unwrap();
        for key in ["chamfer", "f_score", "iou", "precision", "recall", "hausdorff"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
