//! Soft (differentiable) and hard silhouette rasterization.
//!
//! The soft rasterizer follows the classic silhouette-shader recipe: each
//! face contributes a per-pixel coverage probability
//! `sigmoid(sign * d^2 / sigma)` where `d` is the 2D distance from the
//! pixel center to the projected triangle boundary in NDC and the sign is
//! +1 inside / -1 outside. Per-pixel contributions aggregate by product
//! complement `1 - prod(1 - p_f)`. Derivatives with respect to the pose
//! parameters propagate through the identical arithmetic as dual numbers.
//!
//! Pixel convention: integer pixel (u, v) samples the continuous position
//! (u, v); v grows downward. NDC maps pixel (u, v) to
//! `((2u - (W-1))/S, (2v - (H-1))/S)` with `S = max(W, H)`, so NDC
//! distances are isotropic for non-square images.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::cloud::OrganizedPointMap;
use crate::dual::{Dual, DVec2, DVec3, MeshTangents, Tangent, MAX_PARAMS};
use crate::error::CoreError;
use crate::mask::BinaryMask;
use crate::math::{Pt3, Vec3};
use crate::mesh::TriMesh;
use crate::Result;

/// Camera-frame depth of the near clipping plane.
const NEAR: f64 = 1e-6;
/// Face contributions below this probability are dropped.
const P_CUTOFF: f64 = 1e-12;
/// Bin edge length in pixels for the candidate grid.
const BIN_SIZE: usize = 16;

/// Per-pixel coverage probabilities with optional pose-parameter tangents.
#[derive(Debug, Clone)]
pub struct ProbMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    tangents: Option<Vec<Tangent>>,
    active_params: usize,
}

impl ProbMap {
    /// Wrap raw per-pixel probabilities (no tangents).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<ProbMap> {
        if values.len() != width * height {
            return Err(CoreError::InvalidParameter(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::InvalidParameter(
                "probability outside [0,1]".into(),
            ));
        }
        Ok(ProbMap {
            width,
            height,
            values,
            tangents: None,
            active_params: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Number of active pose parameters the tangents refer to (0 when
    /// rendered without tangents).
    pub fn active_params(&self) -> usize {
        self.active_params
    }

    pub fn tangents(&self) -> Option<&[Tangent]> {
        self.tangents.as_deref()
    }

    /// Pixel value as a dual (zero tangent when rendered without).
    pub fn dual_at(&self, idx: usize) -> Dual {
        match &self.tangents {
            Some(t) => Dual::new(self.values[idx], t[idx]),
            None => Dual::constant(self.values[idx]),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hard mask at a 0.5 threshold.
    pub fn threshold(&self) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.values.iter().map(|v| *v >= 0.5).collect(),
        )
        .expect("same shape")
    }
}

/// Configuration of the soft rasterizer.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SoftRasterConfig {
    /// Softness of the edge sigmoid, in squared NDC distance units.
    pub sigma: f64,
    /// Reserved for depth-blended color rendering; unused for silhouettes.
    pub gamma_blend: f64,
    /// Cap on candidate faces aggregated per pixel.
    pub max_faces_per_pixel: usize,
}

impl Default for SoftRasterConfig {
    fn default() -> Self {
        SoftRasterConfig {
            sigma: 1e-4,
            gamma_blend: 0.0,
            max_faces_per_pixel: 64,
        }
    }
}

impl SoftRasterConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.max_faces_per_pixel == 0 {
            return Err(CoreError::InvalidParameter(
                "max_faces_per_pixel must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A clipped, projected triangle in dual NDC coordinates.
struct ScreenTri {
    v: [DVec2; 3],
}

/// Near-plane clip + projection of all faces into screen triangles.
///
/// Returns the screen triangles and their pixel-space bounds.
fn project_faces(
    mesh: &TriMesh,
    camera: &Camera,
    tangents: Option<&MeshTangents>,
) -> Result<(Vec<ScreenTri>, Vec<[f64; 4]>)> {
    if mesh.is_empty() {
        return Err(CoreError::EmptyMesh);
    }
    if let Some(t) = tangents {
        if t.per_vertex.len() != mesh.vertices().len() {
            return Err(CoreError::InvalidParameter(format!(
                "{} vertex tangents for {} vertices",
                t.per_vertex.len(),
                mesh.vertices().len()
            )));
        }
    }

    // World -> camera is constant, so tangents rotate rigidly.
    let world_to_cam = camera.pose.inverse();
    let rot = *world_to_cam.rotation();
    let cam_vertex = |i: usize| -> DVec3 {
        let v = mesh.vertices()[i];
        let p = world_to_cam.apply(&v);
        match tangents {
            Some(t) => {
                let mut dx = [0.0; MAX_PARAMS];
                let mut dy = [0.0; MAX_PARAMS];
                let mut dz = [0.0; MAX_PARAMS];
                for (j, g) in t.per_vertex[i].iter().enumerate() {
                    let gc = rot * g;
                    dx[j] = gc.x;
                    dy[j] = gc.y;
                    dz[j] = gc.z;
                }
                DVec3::from_parts(p.coords, dx, dy, dz)
            }
            None => DVec3::constant(p.coords),
        }
    };

    let w = camera.width as f64;
    let h = camera.height as f64;
    let scale = 2.0 / w.max(h);
    let project = |p: &DVec3| -> DVec2 {
        let u = p.x / p.z * Dual::constant(camera.fx) + Dual::constant(camera.cx);
        let v = p.y / p.z * Dual::constant(camera.fy) + Dual::constant(camera.cy);
        DVec2::new(
            (u * 2.0 - Dual::constant(w - 1.0)) * (0.5 * scale),
            (v * 2.0 - Dual::constant(h - 1.0)) * (0.5 * scale),
        )
    };

    let mut tris = Vec::new();
    let mut bounds = Vec::new();
    for face in mesh.faces() {
        let poly = [cam_vertex(face[0]), cam_vertex(face[1]), cam_vertex(face[2])];
        // Sutherland-Hodgman clip against z >= NEAR.
        let mut clipped: Vec<DVec3> = Vec::with_capacity(4);
        for i in 0..3 {
            let a = poly[i];
            let b = poly[(i + 1) % 3];
            let a_in = a.z.re >= NEAR;
            let b_in = b.z.re >= NEAR;
            if a_in {
                clipped.push(a);
            }
            if a_in != b_in {
                let t = (Dual::constant(NEAR) - a.z) / (b.z - a.z);
                clipped.push(a + (b - a).scale(t));
            }
        }
        if clipped.len() < 3 {
            continue;
        }
        for k in 1..clipped.len() - 1 {
            let tri = ScreenTri {
                v: [
                    project(&clipped[0]),
                    project(&clipped[k]),
                    project(&clipped[k + 1]),
                ],
            };
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for p in &tri.v {
                // Back from NDC to pixel coordinates for binning.
                let px = (p.x.re / scale * 2.0 + (w - 1.0)) / 2.0;
                let py = (p.y.re / scale * 2.0 + (h - 1.0)) / 2.0;
                lo[0] = lo[0].min(px);
                lo[1] = lo[1].min(py);
                hi[0] = hi[0].max(px);
                hi[1] = hi[1].max(py);
            }
            bounds.push([lo[0], lo[1], hi[0], hi[1]]);
            tris.push(tri);
        }
    }
    Ok((tris, bounds))
}

struct BinGrid {
    bins: Vec<Vec<u32>>,
    grid_w: usize,
}

impl BinGrid {
    fn build(bounds: &[[f64; 4]], width: usize, height: usize, pad_px: f64) -> BinGrid {
        let grid_w = width.div_ceil(BIN_SIZE);
        let grid_h = height.div_ceil(BIN_SIZE);
        let mut bins = vec![Vec::new(); grid_w * grid_h];
        for (idx, b) in bounds.iter().enumerate() {
            let x0 = ((b[0] - pad_px).floor().max(0.0) as usize) / BIN_SIZE;
            let y0 = ((b[1] - pad_px).floor().max(0.0) as usize) / BIN_SIZE;
            let x1 = (((b[2] + pad_px).ceil() as isize).clamp(0, width as isize - 1) as usize)
                / BIN_SIZE;
            let y1 = (((b[3] + pad_px).ceil() as isize).clamp(0, height as isize - 1) as usize)
                / BIN_SIZE;
            if b[2] + pad_px < 0.0 || b[3] + pad_px < 0.0 {
                continue;
            }
            for gy in y0..=y1.min(grid_h - 1) {
                for gx in x0..=x1.min(grid_w - 1) {
                    bins[gy * grid_w + gx].push(idx as u32);
                }
            }
        }
        BinGrid { bins, grid_w }
    }

    fn candidates(&self, px: usize, py: usize) -> &[u32] {
        &self.bins[(py / BIN_SIZE) * self.grid_w + px / BIN_SIZE]
    }
}

/// Signed squared distance (+ inside / - outside) from `q` to the triangle
/// boundary. Branches are value-based; the returned dual is smooth across
/// the boundary because d^2 vanishes there.
fn signed_dist_squared(tri: &ScreenTri, q: &DVec2) -> Dual {
    let vals: Vec<(f64, f64)> = tri.v.iter().map(|p| (p.x.re, p.y.re)).collect();
    // Inside test on values with the closed-triangle convention.
    let mut pos = true;
    let mut neg = true;
    for i in 0..3 {
        let (ax, ay) = vals[i];
        let (bx, by) = vals[(i + 1) % 3];
        let cross = (bx - ax) * (q.y.re - ay) - (by - ay) * (q.x.re - ax);
        pos &= cross >= 0.0;
        neg &= cross <= 0.0;
    }
    let inside = pos || neg;

    // Nearest edge by value; ties resolve to the lowest edge index.
    let mut best_edge = 0;
    let mut best_d2 = f64::INFINITY;
    for i in 0..3 {
        let (ax, ay) = vals[i];
        let (bx, by) = vals[(i + 1) % 3];
        let ex = bx - ax;
        let ey = by - ay;
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 {
            (((q.x.re - ax) * ex + (q.y.re - ay) * ey) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dx = q.x.re - (ax + t * ex);
        let dy = q.y.re - (ay + t * ey);
        let d2 = dx * dx + dy * dy;
        if d2 < best_d2 {
            best_d2 = d2;
            best_edge = i;
        }
    }

    // Recompute the winning edge distance in dual arithmetic; the clamp
    // on t matches the value pass.
    let a = tri.v[best_edge];
    let b = tri.v[(best_edge + 1) % 3];
    let e = b - a;
    let len2 = e.norm_squared();
    let t = if len2.re > 0.0 {
        ((*q - a).dot(&e) / len2).clamp(0.0, 1.0)
    } else {
        Dual::constant(0.0)
    };
    let foot = a + e.scale(t);
    let d2 = (*q - foot).norm_squared();
    if inside {
        d2
    } else {
        -d2
    }
}

/// Differentiable soft silhouette.
///
/// When `tangents` is supplied the returned map carries the per-pixel
/// derivative with respect to each active pose parameter.
pub fn render_soft_silhouette(
    mesh: &TriMesh,
    camera: &Camera,
    cfg: &SoftRasterConfig,
    tangents: Option<&MeshTangents>,
) -> Result<ProbMap> {
    cfg.validate()?;
    let (tris, bounds) = project_faces(mesh, camera, tangents)?;
    if tris.is_empty() {
        return Err(CoreError::AllFacesCulled);
    }
    let width = camera.width;
    let height = camera.height;
    let scale = 2.0 / (width.max(height)) as f64;

    // Pad bins so any face within the sigmoid support contributes:
    // sigmoid(-36) < 1e-15 <= P_CUTOFF.
    let pad_ndc = 6.0 * cfg.sigma.sqrt();
    let pad_px = pad_ndc / scale;
    let grid = BinGrid::build(&bounds, width, height, pad_px);

    let with_tangents = tangents.is_some();
    let active = tangents.map(|t| t.active).unwrap_or(0);
    let mut values = vec![0.0f64; width * height];
    let mut tangent_buf = if with_tangents {
        vec![[0.0; MAX_PARAMS]; width * height]
    } else {
        Vec::new()
    };

    let w1 = (width as f64) - 1.0;
    let h1 = (height as f64) - 1.0;
    let max_faces = cfg.max_faces_per_pixel;
    let inv_sigma = 1.0 / cfg.sigma;

    let row_op = |y: usize, row_vals: &mut [f64], row_tan: Option<&mut [Tangent]>| {
        let ndc_y = (2.0 * y as f64 - h1) * 0.5 * scale;
        let mut scored: Vec<(u32, Dual)> = Vec::new();
        let mut row_tan = row_tan;
        for x in 0..width {
            let ndc_x = (2.0 * x as f64 - w1) * 0.5 * scale;
            let q = DVec2::new(Dual::constant(ndc_x), Dual::constant(ndc_y));
            let cands = grid.candidates(x, y);
            scored.clear();
            for &ti in cands {
                let s = signed_dist_squared(&tris[ti as usize], &q);
                scored.push((ti, s));
            }
            if scored.len() > max_faces {
                // Keep the strongest contributors (largest signed value),
                // ties toward the lower face index, then restore index
                // order for a deterministic product.
                scored.sort_unstable_by(|a, b| {
                    b.1.re.partial_cmp(&a.1.re).unwrap().then(a.0.cmp(&b.0))
                });
                scored.truncate(max_faces);
                scored.sort_unstable_by_key(|e| e.0);
            }
            let mut remainder = Dual::constant(1.0);
            for (_, s) in scored.iter() {
                let p = (*s * inv_sigma).sigmoid();
                if p.re < P_CUTOFF {
                    continue;
                }
                remainder = remainder * (Dual::constant(1.0) - p);
            }
            let value = Dual::constant(1.0) - remainder;
            row_vals[x] = value.re;
            if let Some(tan) = row_tan.as_deref_mut() {
                tan[x] = value.eps;
            }
        }
    };

    if with_tangents {
        values
            .par_chunks_mut(width)
            .zip(tangent_buf.par_chunks_mut(width))
            .enumerate()
            .for_each(|(y, (row_vals, row_tan))| row_op(y, row_vals, Some(row_tan)));
    } else {
        values
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(y, row_vals)| row_op(y, row_vals, None));
    }

    Ok(ProbMap {
        width,
        height,
        values,
        tangents: with_tangents.then_some(tangent_buf),
        active_params: active,
    })
}

/// Hard binary silhouette: a pixel is set iff its center lies inside any
/// projected front-of-camera triangle (closed-boundary convention).
///
/// A mesh entirely behind the camera yields an all-false mask.
pub fn render_hard_silhouette(mesh: &TriMesh, camera: &Camera) -> Result<BinaryMask> {
    let (tris, bounds) = project_faces(mesh, camera, None)?;
    let width = camera.width;
    let height = camera.height;
    let mut bits = vec![false; width * height];
    if tris.is_empty() {
        return BinaryMask::new(width, height, bits);
    }
    let grid = BinGrid::build(&bounds, width, height, 0.5);
    let scale = 2.0 / (width.max(height)) as f64;
    let w1 = (width as f64) - 1.0;
    let h1 = (height as f64) - 1.0;

    bits.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let ndc_y = (2.0 * y as f64 - h1) * 0.5 * scale;
        for (x, out) in row.iter_mut().enumerate() {
            let ndc_x = (2.0 * x as f64 - w1) * 0.5 * scale;
            for &ti in grid.candidates(x, y) {
                let tri = &tris[ti as usize];
                let mut pos = true;
                let mut neg = true;
                for i in 0..3 {
                    let a = &tri.v[i];
                    let b = &tri.v[(i + 1) % 3];
                    let cross = (b.x.re - a.x.re) * (ndc_y - a.y.re)
                        - (b.y.re - a.y.re) * (ndc_x - a.x.re);
                    pos &= cross >= 0.0;
                    neg &= cross <= 0.0;
                }
                if pos || neg {
                    *out = true;
                    break;
                }
            }
        }
    });
    BinaryMask::new(width, height, bits)
}

/// Per-pixel visibility of a set of meshes.
#[derive(Debug, Clone)]
pub struct VisibilityMap {
    pub width: usize,
    pub height: usize,
    /// Index into the input mesh slice of the nearest surface, per pixel.
    pub mesh_index: Vec<Option<usize>>,
    /// World-space hit point (valid where `mesh_index` is `Some`).
    pub points: Vec<Pt3>,
    /// Camera-frame hit depth.
    pub depth: Vec<f64>,
}

impl VisibilityMap {
    /// Visible-surface mask of one input mesh.
    pub fn mask_of(&self, mesh: usize) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.mesh_index.iter().map(|m| *m == Some(mesh)).collect(),
        )
        .expect("same shape")
    }

    /// Organized point map of all visible surfaces, confidence 1.
    pub fn to_pointmap(&self) -> OrganizedPointMap {
        let validity: Vec<bool> = self.mesh_index.iter().map(|m| m.is_some()).collect();
        let confidence = validity.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        OrganizedPointMap::new(
            self.width,
            self.height,
            self.points.clone(),
            confidence,
            validity,
        )
        .expect("consistent buffers")
    }
}

/// Z-buffered visibility of `meshes` through `camera`, by per-pixel ray
/// casting against binned candidate faces.
pub fn render_visibility(meshes: &[&TriMesh], camera: &Camera) -> Result<VisibilityMap> {
    let width = camera.width;
    let height = camera.height;
    // Flatten all faces, remembering their source mesh, in camera space.
    let world_to_cam = camera.pose.inverse();
    let mut faces: Vec<(usize, [Pt3; 3])> = Vec::new();
    for (mi, mesh) in meshes.iter().enumerate() {
        for fi in 0..mesh.faces().len() {
            let [a, b, c] = mesh.triangle(fi);
            faces.push((
                mi,
                [
                    world_to_cam.apply(&a),
                    world_to_cam.apply(&b),
                    world_to_cam.apply(&c),
                ],
            ));
        }
    }
    // Project for binning; keep only faces at least partly in front.
    let mut bounds = Vec::with_capacity(faces.len());
    let mut kept = Vec::with_capacity(faces.len());
    for (mi, tri) in faces {
        if tri.iter().all(|p| p.z < NEAR) {
            continue;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut clipped_ok = true;
        // Conservative pixel bounds from clipped corners.
        let mut corners: Vec<Pt3> = Vec::with_capacity(4);
        for i in 0..3 {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            if a.z >= NEAR {
                corners.push(a);
            }
            if (a.z >= NEAR) != (b.z >= NEAR) {
                let t = (NEAR - a.z) / (b.z - a.z);
                corners.push(Pt3::from(a.coords + (b.coords - a.coords) * t));
            }
        }
        if corners.len() < 3 {
            clipped_ok = false;
        }
        for p in &corners {
            let u = camera.fx * p.x / p.z + camera.cx;
            let v = camera.fy * p.y / p.z + camera.cy;
            lo[0] = lo[0].min(u);
            lo[1] = lo[1].min(v);
            hi[0] = hi[0].max(u);
            hi[1] = hi[1].max(v);
        }
        if clipped_ok {
            bounds.push([lo[0], lo[1], hi[0], hi[1]]);
            kept.push((mi, tri));
        }
    }
    let grid = BinGrid::build(&bounds, width, height, 0.5);

    let mut mesh_index = vec![None; width * height];
    let mut points = vec![Pt3::origin(); width * height];
    let mut depth = vec![f64::INFINITY; width * height];

    let rows: Vec<(usize, (&mut [Option<usize>], &mut [Pt3], &mut [f64]))> = mesh_index
        .chunks_mut(width)
        .zip(points.chunks_mut(width))
        .zip(depth.chunks_mut(width))
        .map(|((a, b), c)| (a, b, c))
        .enumerate()
        .collect();

    rows.into_par_iter().for_each(|(y, (row_idx, row_pts, row_depth))| {
        for x in 0..width {
            // Ray through the pixel center: direction with z = 1.
            let dir = Vec3::new(
                (x as f64 - camera.cx) / camera.fx,
                (y as f64 - camera.cy) / camera.fy,
                1.0,
            );
            let mut best_t = f64::INFINITY;
            let mut best: Option<usize> = None;
            let mut best_p = Pt3::origin();
            for &fi in grid.candidates(x, y) {
                let (mi, tri) = &kept[fi as usize];
                // Moller-Trumbore from the origin.
                let e1 = tri[1] - tri[0];
                let e2 = tri[2] - tri[0];
                let pvec = dir.cross(&e2);
                let det = e1.dot(&pvec);
                if det.abs() < 1e-14 {
                    continue;
                }
                let inv_det = 1.0 / det;
                let tvec = -tri[0].coords;
                let u = tvec.dot(&pvec) * inv_det;
                if !(-1e-12..=1.0 + 1e-12).contains(&u) {
                    continue;
                }
                let qvec = tvec.cross(&e1);
                let v = dir.dot(&qvec) * inv_det;
                if v < -1e-12 || u + v > 1.0 + 1e-12 {
                    continue;
                }
                let t = e2.dot(&qvec) * inv_det;
                if t > NEAR && t < best_t {
                    best_t = t;
                    best = Some(*mi);
                    best_p = Pt3::from(dir * t);
                }
            }
            if let Some(mi) = best {
                row_idx[x] = Some(mi);
                row_pts[x] = camera.pose.apply(&best_p);
                row_depth[x] = best_t;
            }
        }
    });

    Ok(VisibilityMap {
        width,
        height,
        mesh_index,
        points,
        depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RigidTransform;

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(
            (w as f64) * 0.8,
            (w as f64) * 0.8,
            (w as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
            w,
            h,
            RigidTransform::identity(),
        )
        .unwrap()
    }

    /// One triangle facing the camera at z = depth.
    fn facing_triangle(extent: f64, depth: f64) -> TriMesh {
        TriMesh::new(
            vec![
                Pt3::new(-extent, extent, depth),
                Pt3::new(extent, extent, depth),
                Pt3::new(0.0, -extent, depth),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn fully_behind_camera() {
        let cam = camera(32, 32);
        let mesh = facing_triangle(1.0, -2.0);
        assert!(matches!(
            render_soft_silhouette(&mesh, &cam, &SoftRasterConfig::default(), None),
            Err(CoreError::AllFacesCulled)
        ));
        let mask = render_hard_silhouette(&mesh, &cam).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn deep_interior_pixel_saturates() {
        let cam = camera(64, 64);
        let mesh = facing_triangle(50.0, 2.0);
        let pm = render_soft_silhouette(&mesh, &cam, &SoftRasterConfig::default(), None).unwrap();
        let center = pm.value(31, 31);
        assert!(center > 0.999, "center value {center}");
    }

    #[test]
    fn pixel_on_edge_contributes_half() {
        let cam = camera(64, 64);
        // Triangle with a vertical edge passing exactly through pixel
        // column 31 (pixel centers at integer coordinates), wide enough
        // that other edges are far away.
        let z = 2.0;
        let edge_x = (31.0 - cam.cx) / cam.fx * z;
        let far_x = (80.0 - cam.cx) / cam.fx * z;
        let mesh = TriMesh::new(
            vec![
                Pt3::new(edge_x, -10.0, z),
                Pt3::new(edge_x, 10.0, z),
                Pt3::new(far_x, 0.0, z),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pm = render_soft_silhouette(&mesh, &cam, &SoftRasterConfig::default(), None).unwrap();
        // Single face: value = p = sigmoid(0) = 0.5 on the edge.
        let v = pm.value(31, 31);
        assert!((v - 0.5).abs() < 1e-9, "edge value {v}");
    }

    #[test]
    fn full_image_triangle_hard() {
        let cam = camera(32, 24);
        let mesh = facing_triangle(100.0, 1.0);
        let mask = render_hard_silhouette(&mesh, &cam).unwrap();
        assert_eq!(mask.count(), 32 * 24);
    }

    #[test]
    fn hard_matches_brute_force_point_in_triangle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let cam = camera(48, 40);
        for _ in 0..5 {
            let c = Pt3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(2.0..4.0),
            );
            let mesh = TriMesh::cuboid(
                c,
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
            );
            let mask = render_hard_silhouette(&mesh, &cam).unwrap();
            // Brute force: every pixel against every projected face.
            let mut projected: Vec<[(f64, f64); 3]> = Vec::new();
            for fi in 0..mesh.faces().len() {
                let tri = mesh.triangle(fi);
                let mut px = [(0.0, 0.0); 3];
                for (i, p) in tri.iter().enumerate() {
                    px[i] = (
                        cam.fx * p.x / p.z + cam.cx,
                        cam.fy * p.y / p.z + cam.cy,
                    );
                }
                projected.push(px);
            }
            for y in 0..40 {
                for x in 0..48 {
                    let inside = projected.iter().any(|t| {
                        let mut pos = true;
                        let mut neg = true;
                        for i in 0..3 {
                            let a = t[i];
                            let b = t[(i + 1) % 3];
                            let cr = (b.0 - a.0) * (y as f64 - a.1)
                                - (b.1 - a.1) * (x as f64 - a.0);
                            pos &= cr >= 0.0;
                            neg &= cr <= 0.0;
                        }
                        pos || neg
                    });
                    assert_eq!(mask.get(x, y), inside, "pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn outside_value_decreases_with_sigma() {
        let cam = camera(64, 64);
        let mesh = facing_triangle(0.5, 2.0);
        let value_at = |sigma: f64, x: usize, y: usize| {
            let cfg = SoftRasterConfig {
                sigma,
                ..Default::default()
            };
            render_soft_silhouette(&mesh, &cam, &cfg, None)
                .unwrap()
                .value(x, y)
        };
        // A pixel strictly outside the silhouette.
        let hard = render_hard_silhouette(&mesh, &cam).unwrap();
        let mut checked = 0;
        for (x, y) in [(2, 2), (60, 60), (5, 32), (32, 3)] {
            assert!(!hard.get(x, y));
            let coarse = value_at(4e-4, x, y);
            let fine = value_at(1e-4, x, y);
            let finer = value_at(2.5e-5, x, y);
            assert!(coarse >= fine && fine >= finer, "({x},{y}): {coarse} {fine} {finer}");
            checked += 1;
        }
        assert_eq!(checked, 4);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let cam = camera(96, 96);
        let mesh = TriMesh::cuboid(Pt3::new(0.1, -0.05, 3.0), 1.0, 0.8, 0.6);
        let cfg = SoftRasterConfig::default();
        let base = render_soft_silhouette(&mesh, &cam, &cfg, None).unwrap();
        for threads in [1usize, 2, 7] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let pm = pool.install(|| render_soft_silhouette(&mesh, &cam, &cfg, None).unwrap());
            assert_eq!(pm.values(), base.values(), "thread count {threads}");
        }
    }

    #[test]
    fn translation_tangent_matches_finite_difference() {
        let cam = camera(48, 48);
        // Slightly rotated and offset so no pixel center sits on an exact
        // nearest-edge tie (symmetric poses make min-over-edges kinks line
        // up with pixel centers, where one-sided AD and central FD
        // legitimately disagree).
        let mesh = TriMesh::cuboid(Pt3::origin(), 1.0, 0.9, 0.8)
            .transformed(&RigidTransform::from_rotation_y(0.37))
            .transformed(&RigidTransform::from_translation(Vec3::new(0.083, -0.041, 3.1)));
        let nv = mesh.vertices().len();
        // Slot 0: d/d(tx) => unit x tangent on every vertex.
        let tangents = MeshTangents {
            per_vertex: vec![
                [
                    Vec3::x(),
                    Vec3::zeros(),
                    Vec3::zeros(),
                    Vec3::zeros(),
                    Vec3::zeros(),
                ];
                nv
            ],
            active: 1,
        };
        let cfg = SoftRasterConfig {
            sigma: 1e-3,
            ..Default::default()
        };
        let pm = render_soft_silhouette(&mesh, &cam, &cfg, Some(&tangents)).unwrap();
        let mean_tan: f64 =
            pm.tangents().unwrap().iter().map(|t| t[0]).sum::<f64>() / pm.len() as f64;

        let h = 1e-4;
        let shift = |dx: f64| {
            let m = mesh.transformed(&RigidTransform::from_translation(Vec3::new(dx, 0.0, 0.0)));
            let pm = render_soft_silhouette(&m, &cam, &cfg, None).unwrap();
            pm.values().iter().sum::<f64>() / pm.len() as f64
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        let rel = (mean_tan - fd).abs() / fd.abs().max(1e-9);
        assert!(rel < 1e-3, "ad {mean_tan} vs fd {fd} rel {rel}");
    }
}
