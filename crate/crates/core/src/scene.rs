//! Scene-level geometric inference: floor-plane fitting, plane-local
//! frames, mask stenciling of organized point maps, robust background
//! bounds, point-cloud registration, and mask IoU.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_aabb, Aabb};
use crate::cloud::{OrganizedPointMap, PointCloud};
use crate::error::CoreError;
use crate::mask::BinaryMask;
use crate::math::{Mat3, Pt3, RigidTransform, Vec3};
use crate::spatial::KdTree3;
use crate::Result;

/// Fitted plane with a cached plane-local frame.
///
/// The frame maps plane coordinates into the world: its Y axis is the
/// plane normal and its origin is `p0`. The X axis is world X projected
/// onto the plane (world Z when the normal is parallel to X), and
/// Z = X x Y keeps the frame right-handed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneRepr", into = "PlaneRepr")]
pub struct Plane {
    normal: Vec3,
    p0: Pt3,
    frame: RigidTransform,
}

#[derive(Serialize, Deserialize)]
struct PlaneRepr {
    normal: [f64; 3],
    point: [f64; 3],
}

impl From<Plane> for PlaneRepr {
    fn from(p: Plane) -> Self {
        PlaneRepr {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            point: [p.p0.x, p.p0.y, p.p0.z],
        }
    }
}

impl TryFrom<PlaneRepr> for Plane {
    type Error = CoreError;
    fn try_from(r: PlaneRepr) -> Result<Self> {
        Plane::new(
            Vec3::new(r.normal[0], r.normal[1], r.normal[2]),
            Pt3::new(r.point[0], r.point[1], r.point[2]),
        )
    }
}

impl Plane {
    pub fn new(normal: Vec3, p0: Pt3) -> Result<Plane> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(CoreError::InvalidParameter(
                "plane normal must be non-zero".into(),
            ));
        }
        let n = normal / norm;
        let mut x = Vec3::x() - n * n.x;
        if x.norm() < 1e-6 {
            x = Vec3::z() - n * n.z;
        }
        let x = x.normalize();
        let z = x.cross(&n);
        let frame = RigidTransform::new(Mat3::from_columns(&[x, n, z]), p0.coords)?;
        Ok(Plane {
            normal: n,
            p0,
            frame,
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn point(&self) -> Pt3 {
        self.p0
    }

    /// Signed distance of a point along the normal.
    pub fn signed_distance(&self, p: &Pt3) -> f64 {
        self.normal.dot(&(p - self.p0))
    }

    pub fn to_local(&self, p: &Pt3) -> Pt3 {
        self.frame.inverse().apply(p)
    }

    pub fn to_world(&self, p: &Pt3) -> Pt3 {
        self.frame.apply(p)
    }
}

/// World-from-plane frame of the plane (cached at construction).
pub fn plane_local_frame(plane: &Plane) -> RigidTransform {
    plane.frame
}

/// RANSAC plane-fit parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Absolute inlier distance in meters; `None` scales with the cloud
    /// (0.01 x AABB diagonal).
    pub inlier_threshold: Option<f64>,
    pub min_inlier_fraction: f64,
    pub seed: u64,
    /// Orientation fallback for near-vertical planes, normally the
    /// camera's up direction in world coordinates.
    pub up_hint: [f64; 3],
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 512,
            inlier_threshold: None,
            min_inlier_fraction: 0.2,
            seed: 0,
            up_hint: [0.0, 1.0, 0.0],
        }
    }
}

/// Robust plane fit: best-of-`iterations` random 3-point hypotheses,
/// refined by least squares over the winning inlier set. The normal is
/// oriented toward world +Y, falling back to `up_hint` for near-vertical
/// planes.
pub fn ransac_plane(points: &PointCloud, cfg: &RansacConfig) -> Result<Plane> {
    let pts = points.points();
    let n = pts.len();
    if n < 3 {
        return Err(CoreError::InsufficientPoints { needed: 3, got: n });
    }
    if cfg.iterations == 0 {
        return Err(CoreError::InvalidParameter("iterations must be >= 1".into()));
    }
    let threshold = match cfg.inlier_threshold {
        Some(t) if t > 0.0 => t,
        Some(t) => {
            return Err(CoreError::InvalidParameter(format!(
                "inlier_threshold must be positive, got {t}"
            )))
        }
        None => 0.01 * compute_aabb(points)?.diagonal().max(1e-12),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_count = 0usize;
    let mut best_plane: Option<(Vec3, Pt3)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let k = rng.gen_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let a = pts[i];
        let normal = (pts[j] - a).cross(&(pts[k] - a));
        let len = normal.norm();
        if len < 1e-12 {
            continue;
        }
        let normal = normal / len;
        let count = pts
            .iter()
            .filter(|p| normal.dot(&(*p - a)).abs() <= threshold)
            .count();
        if count > best_count {
            best_count = count;
            best_plane = Some((normal, a));
        }
    }

    let frac = best_count as f64 / n as f64;
    let (hyp_normal, hyp_p0) = match best_plane {
        Some(p) if frac >= cfg.min_inlier_fraction => p,
        _ => {
            return Err(CoreError::NoConsensus {
                best: frac,
                required: cfg.min_inlier_fraction,
            })
        }
    };

    // Least-squares refinement over the final inliers: plane through the
    // centroid, normal = least-variance covariance eigenvector.
    let inliers: Vec<Pt3> = pts
        .iter()
        .filter(|p| hyp_normal.dot(&(*p - hyp_p0)).abs() <= threshold)
        .copied()
        .collect();
    let centroid =
        inliers.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / inliers.len() as f64;
    let mut cov = Mat3::zeros();
    for p in &inliers {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eigen = SymmetricEigen::new(cov);
    let mut min_idx = 0;
    for i in 1..3 {
        if eigen.eigenvalues[i] < eigen.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let mut normal: Vec3 = eigen.eigenvectors.column(min_idx).into_owned();
    if normal.norm() < 1e-12 {
        normal = hyp_normal;
    } else {
        normal = normal.normalize();
    }

    // Orient upward; near-vertical planes defer to the caller's up hint.
    let dot_y = normal.dot(&Vec3::y());
    if dot_y < -1e-6 {
        normal = -normal;
    } else if dot_y.abs() <= 1e-6 {
        let hint = Vec3::new(cfg.up_hint[0], cfg.up_hint[1], cfg.up_hint[2]);
        if normal.dot(&hint) < 0.0 {
            normal = -normal;
        }
    }
    Plane::new(normal, Pt3::from(centroid))
}

/// Select the organized-map points under a mask with sufficient
/// confidence, in row-major order.
pub fn stencil_pointmap(
    pm: &OrganizedPointMap,
    mask: &BinaryMask,
    min_confidence: f64,
) -> Result<PointCloud> {
    if pm.width() != mask.width() || pm.height() != mask.height() {
        return Err(CoreError::ShapeMismatch {
            expected_w: pm.width(),
            expected_h: pm.height(),
            got_w: mask.width(),
            got_h: mask.height(),
        });
    }
    let mut pts = Vec::new();
    let mut conf = Vec::new();
    for y in 0..pm.height() {
        for x in 0..pm.width() {
            if mask.get(x, y) && pm.is_valid(x, y) && pm.confidence_at(x, y) >= min_confidence {
                pts.push(pm.point(x, y));
                conf.push(pm.confidence_at(x, y));
            }
        }
    }
    PointCloud::with_confidence(pts, Some(conf))
}

/// Outlier-robust axis-aligned bounds spanning the
/// `[percentile, 1 - percentile]` order statistics per axis.
pub fn background_bounds(bg: &PointCloud, percentile: f64) -> Result<Aabb> {
    if bg.is_empty() {
        return Err(CoreError::EmptyInput("background_bounds"));
    }
    if !(0.0..0.5).contains(&percentile) {
        return Err(CoreError::InvalidParameter(format!(
            "percentile must lie in [0, 0.5), got {percentile}"
        )));
    }
    let n = bg.len();
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    let mut buf: Vec<f64> = Vec::with_capacity(n);
    for axis in 0..3 {
        buf.clear();
        buf.extend(bg.points().iter().map(|p| p[axis]));
        buf.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = (percentile * (n - 1) as f64).floor() as usize;
        let hi = ((1.0 - percentile) * (n - 1) as f64).ceil() as usize;
        min[axis] = buf[lo];
        max[axis] = buf[hi.min(n - 1)];
    }
    Aabb::new(min, max)
}

/// Iterative-closest-point parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop when the rms change between iterations drops below this.
    pub convergence_eps: f64,
    /// Correspondences beyond this distance are rejected; `None` scales
    /// with the destination cloud (0.1 x AABB diagonal).
    pub max_correspondence_dist: Option<f64>,
    /// Solve only for a translation (centroid shift) per iteration.
    pub translation_only: bool,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            convergence_eps: 1e-9,
            max_correspondence_dist: None,
            translation_only: false,
        }
    }
}

/// Point-to-point ICP. Returns the transform mapping `src` into `dst`
/// and the final inlier rms.
pub fn icp_align(
    src: &PointCloud,
    dst: &PointCloud,
    cfg: &IcpConfig,
) -> Result<(RigidTransform, f64)> {
    let needed = if cfg.translation_only { 1 } else { 3 };
    if src.len() < needed {
        return Err(CoreError::InsufficientPoints {
            needed,
            got: src.len(),
        });
    }
    if dst.len() < needed {
        return Err(CoreError::InsufficientPoints {
            needed,
            got: dst.len(),
        });
    }
    if cfg.max_iterations == 0 || cfg.convergence_eps <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "icp needs max_iterations >= 1 and convergence_eps > 0".into(),
        ));
    }
    let max_dist = match cfg.max_correspondence_dist {
        Some(d) if d > 0.0 => d,
        Some(d) => {
            return Err(CoreError::InvalidParameter(format!(
                "max_correspondence_dist must be positive, got {d}"
            )))
        }
        None => 0.1 * compute_aabb(dst)?.diagonal().max(1e-12),
    };
    let max_dist2 = max_dist * max_dist;

    let tree = KdTree3::build(dst.points());
    let mut transform = RigidTransform::identity();
    let mut current: Vec<Pt3> = src.points().to_vec();
    let mut prev_rms = f64::INFINITY;
    let mut rms = f64::INFINITY;
    let mut growth_streak = 0usize;

    for iter in 0..cfg.max_iterations {
        // Accepted correspondences under the current transform.
        let mut pairs: Vec<(Pt3, Pt3)> = Vec::with_capacity(current.len());
        for p in &current {
            let (idx, d2) = tree.nearest(p);
            if d2 <= max_dist2 {
                pairs.push((*p, dst.points()[idx]));
            }
        }
        if pairs.len() < needed {
            if iter == 0 {
                return Err(CoreError::InsufficientPoints {
                    needed,
                    got: pairs.len(),
                });
            }
            break;
        }

        let m = pairs.len() as f64;
        let src_centroid = pairs.iter().fold(Vec3::zeros(), |a, p| a + p.0.coords) / m;
        let dst_centroid = pairs.iter().fold(Vec3::zeros(), |a, p| a + p.1.coords) / m;

        let delta = if cfg.translation_only {
            RigidTransform::from_translation(dst_centroid - src_centroid)
        } else {
            let mut h = Mat3::zeros();
            for (s, d) in &pairs {
                h += (s.coords - src_centroid) * (d.coords - dst_centroid).transpose();
            }
            let svd = h.svd(true, true);
            let u = svd.u.expect("svd with u");
            let vt = svd.v_t.expect("svd with v_t");
            let mut r = vt.transpose() * u.transpose();
            if r.determinant() < 0.0 {
                // Reflection guard: flip the least-significant axis.
                let mut flip = Mat3::identity();
                flip[(2, 2)] = -1.0;
                r = vt.transpose() * flip * u.transpose();
            }
            let t = dst_centroid - r * src_centroid;
            RigidTransform::new(r, t).map_err(|_| CoreError::NonFinite("icp rotation"))?
        };

        transform = delta.compose(&transform);
        for p in current.iter_mut() {
            *p = delta.apply(p);
        }

        // Inlier rms after the update.
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for p in &current {
            let (_, d2) = tree.nearest(p);
            if d2 <= max_dist2 {
                acc += d2;
                cnt += 1;
            }
        }
        rms = if cnt > 0 {
            (acc / cnt as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if rms > prev_rms {
            growth_streak += 1;
            if growth_streak >= 5 {
                return Err(CoreError::Diverged(iter + 1));
            }
        } else {
            growth_streak = 0;
        }
        if (prev_rms - rms).abs() < cfg.convergence_eps {
            prev_rms = rms;
            break;
        }
        prev_rms = rms;
    }
    Ok((transform, rms.min(prev_rms)))
}

/// Intersection-over-union of two masks after optional dilation of both.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask, dilation_px: usize) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(a.shape_mismatch(b));
    }
    let da = a.dilate(dilation_px);
    let db = b.dilate(dilation_px);
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in da.bits().iter().zip(db.bits().iter()) {
        if *x && *y {
            inter += 1;
        }
        if *x || *y {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_y;

    #[test]
    fn plane_frame_identity_for_floor() {
        let plane = Plane::new(Vec3::y(), Pt3::origin()).unwrap();
        assert!(
            plane_local_frame(&plane).deviation_from(&RigidTransform::identity()) < 1e-12
        );

        let shifted = Plane::new(Vec3::y(), Pt3::new(1.0, 0.0, 2.0)).unwrap();
        let f = plane_local_frame(&shifted);
        assert!((f.translation() - Vec3::new(1.0, 0.0, 2.0)).norm() < 1e-12);
        assert!((f.rotation() - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn plane_frame_tilted_normal_maps_to_local_y() {
        let a = 10f64.to_radians();
        let n = Vec3::new(0.0, a.cos(), a.sin());
        let p0 = Pt3::new(0.3, -0.2, 0.9);
        let plane = Plane::new(n, p0).unwrap();
        let local = plane.to_local(&Pt3::from(p0.coords + n));
        assert!((local - Pt3::new(0.0, 1.0, 0.0)).norm() < 1e-9, "{local:?}");
        // Round trip.
        let p = Pt3::new(4.0, 5.0, -6.0);
        assert!((plane.to_world(&plane.to_local(&p)) - p).norm() < 1e-9);
    }

    fn floor_points(n: usize, noise: f64, seed: u64) -> Vec<Pt3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let y = if noise > 0.0 {
                    // Box-Muller keeps rand_distr out of the deps.
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    noise * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                } else {
                    0.0
                };
                Pt3::new(rng.gen_range(-1.0..1.0), y, rng.gen_range(-1.0..1.0))
            })
            .collect()
    }

    #[test]
    fn ransac_noiseless_floor() {
        let cloud = PointCloud::new(floor_points(100, 0.0, 1)).unwrap();
        let plane = ransac_plane(&cloud, &RansacConfig::default()).unwrap();
        assert!((plane.normal() - Vec3::y()).norm() < 1e-9);
        assert!(plane.normal().dot(&plane.point().coords).abs() <= 1e-9);
    }

    #[test]
    fn ransac_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = floor_points(80, 0.002, 3);
        for _ in 0..20 {
            pts.push(Pt3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.2..2.0),
                rng.gen_range(-1.0..1.0),
            ));
        }
        let cloud = PointCloud::new(pts).unwrap();
        let cfg = RansacConfig {
            inlier_threshold: Some(0.01),
            ..Default::default()
        };
        let plane = ransac_plane(&cloud, &cfg).unwrap();
        let angle = plane.normal().dot(&Vec3::y()).clamp(-1.0, 1.0).acos();
        assert!(angle.to_degrees() < 1.0, "normal off by {}", angle.to_degrees());
    }

    #[test]
    fn ransac_insufficient_points() {
        let cloud = PointCloud::new(vec![Pt3::origin(), Pt3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(
            ransac_plane(&cloud, &RansacConfig::default()),
            Err(CoreError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn ransac_deterministic_per_seed() {
        let cloud = PointCloud::new(floor_points(200, 0.01, 9)).unwrap();
        let cfg = RansacConfig {
            seed: 42,
            ..Default::default()
        };
        let a = ransac_plane(&cloud, &cfg).unwrap();
        let b = ransac_plane(&cloud, &cfg).unwrap();
        assert_eq!(a.normal(), b.normal());
        assert_eq!(a.point(), b.point());
    }

    fn tiny_map() -> OrganizedPointMap {
        let mut pts = Vec::new();
        let mut conf = Vec::new();
        let mut valid = Vec::new();
        for y in 0..3 {
            for x in 0..4 {
                pts.push(Pt3::new(x as f64, y as f64, 1.0));
                conf.push(if (x + y) % 3 == 0 { 0.9 } else { 0.4 });
                valid.push(!(x == 3 && y == 2));
            }
        }
        OrganizedPointMap::new(4, 3, pts, conf, valid).unwrap()
    }

    #[test]
    fn stencil_full_and_empty() {
        let pm = tiny_map();
        let all = BinaryMask::filled(4, 3, true);
        let cloud = stencil_pointmap(&pm, &all, 0.0).unwrap();
        assert_eq!(cloud.len(), 11); // one invalid pixel dropped

        let none = BinaryMask::filled(4, 3, false);
        assert_eq!(stencil_pointmap(&pm, &none, 0.0).unwrap().len(), 0);

        let wrong = BinaryMask::filled(5, 3, true);
        assert!(matches!(
            stencil_pointmap(&pm, &wrong, 0.0),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stencil_matches_pixel_scan_oracle() {
        let pm = tiny_map();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bits: Vec<bool> = (0..12).map(|_| rng.gen_bool(0.5)).collect();
        let mask = BinaryMask::new(4, 3, bits.clone()).unwrap();
        let cloud = stencil_pointmap(&pm, &mask, 0.5).unwrap();
        let mut expect = Vec::new();
        for y in 0..3 {
            for x in 0..4 {
                if bits[y * 4 + x] && pm.is_valid(x, y) && pm.confidence_at(x, y) >= 0.5 {
                    expect.push(pm.point(x, y));
                }
            }
        }
        assert_eq!(cloud.points(), expect.as_slice());
        assert!(cloud.len() <= mask.count());
    }

    #[test]
    fn background_bounds_percentile_zero_is_aabb() {
        let cloud = PointCloud::new(floor_points(50, 0.1, 4)).unwrap();
        let b = background_bounds(&cloud, 0.0).unwrap();
        let a = compute_aabb(&cloud).unwrap();
        assert_eq!(a.min, b.min);
        assert_eq!(a.max, b.max);

        let single = PointCloud::new(vec![Pt3::new(1.0, 2.0, 3.0)]).unwrap();
        let b = background_bounds(&single, 0.01).unwrap();
        assert_eq!(b.min, b.max);
    }

    #[test]
    fn background_bounds_rejects_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<Pt3> = (0..1000)
            .map(|_| {
                Pt3::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        for i in 0..10 {
            let s = if i % 2 == 0 { 100.0 } else { -100.0 };
            pts.push(Pt3::new(s, s, s));
        }
        let b = background_bounds(&PointCloud::new(pts).unwrap(), 0.01).unwrap();
        for a in 0..3 {
            assert!(b.min[a] >= -0.05, "min[{a}] = {}", b.min[a]);
            assert!(b.max[a] <= 1.05, "max[{a}] = {}", b.max[a]);
        }
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
    fn icp_identity() {
        let cloud = random_cloud(200, 31);
        let (t, rms) = icp_align(&cloud, &cloud, &IcpConfig::default()).unwrap();
        assert!(t.deviation_from(&RigidTransform::identity()) < 1e-9);
        assert!(rms <= 1e-9);
    }

    #[test]
    fn icp_recovers_small_rigid_transform() {
        let src = random_cloud(500, 32);
        let gt = RigidTransform::new(rotation_y(5f64.to_radians()), Vec3::new(0.1, 0.0, 0.05))
            .unwrap();
        let dst = src.transformed(&gt);
        let cfg = IcpConfig {
            max_iterations: 100,
            convergence_eps: 1e-13,
            ..Default::default()
        };
        let (t, rms) = icp_align(&src, &dst, &cfg).unwrap();
        assert!(t.deviation_from(&gt) < 1e-6, "dev {}", t.deviation_from(&gt));
        assert!(rms < 1e-7);
    }

    #[test]
    fn icp_translation_only_exact() {
        let src = random_cloud(100, 33);
        let shift = Vec3::new(0.3, 0.0, 0.0);
        let dst = src.transformed(&RigidTransform::from_translation(shift));
        let cfg = IcpConfig {
            translation_only: true,
            max_correspondence_dist: Some(10.0),
            max_iterations: 100,
            convergence_eps: 1e-15,
            ..Default::default()
        };
        let (t, _) = icp_align(&src, &dst, &cfg).unwrap();
        assert!((t.translation() - shift).norm() < 1e-9);
        assert!((t.rotation() - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn icp_forward_backward_is_identity() {
        let src = random_cloud(300, 34);
        let gt = RigidTransform::new(
            rotation_y(8f64.to_radians()),
            Vec3::new(0.05, 0.02, -0.04),
        )
        .unwrap();
        let dst = src.transformed(&gt);
        let cfg = IcpConfig {
            max_iterations: 100,
            convergence_eps: 1e-13,
            ..Default::default()
        };
        let (fwd, _) = icp_align(&src, &dst, &cfg).unwrap();
        let (bwd, _) = icp_align(&dst, &src, &cfg).unwrap();
        assert!(fwd.compose(&bwd).deviation_from(&RigidTransform::identity()) < 1e-5);
    }

    #[test]
    fn mask_iou_cases() {
        let a = BinaryMask::filled(4, 4, true);
        assert_eq!(mask_iou(&a, &a, 0).unwrap(), 1.0);

        // A = left half, B = top half: intersection 4, union 12.
        let mut left = BinaryMask::filled(4, 4, false);
        let mut top = BinaryMask::filled(4, 4, false);
        for y in 0..4 {
            for x in 0..2 {
                left.set(x, y, true);
            }
        }
        for y in 0..2 {
            for x in 0..4 {
                top.set(x, y, true);
            }
        }
        let iou = mask_iou(&left, &top, 0).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-12);

        // Disjoint, non-adjacent.
        let mut a = BinaryMask::filled(8, 1, false);
        let mut b = BinaryMask::filled(8, 1, false);
        a.set(0, 0, true);
        b.set(7, 0, true);
        assert_eq!(mask_iou(&a, &b, 0).unwrap(), 0.0);

        // Empty union.
        let e = BinaryMask::filled(4, 4, false);
        assert_eq!(mask_iou(&e, &e, 0).unwrap(), 0.0);
    }
}
