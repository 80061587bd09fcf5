//! Indexed triangle meshes.

use rand::Rng;

use crate::error::CoreError;
use crate::math::{Pt3, RigidTransform, Vec3};
use crate::Result;

/// Faces with area at or below this are dropped at construction.
pub const DEGENERATE_FACE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with optional per-vertex RGB in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Pt3>,
    faces: Vec<[usize; 3]>,
    colors: Option<Vec<[f64; 3]>>,
}

impl TriMesh {
    /// Build a mesh, validating indices and dropping degenerate faces.
    pub fn new(vertices: Vec<Pt3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_colors(vertices, faces, None)
    }

    pub fn with_colors(
        vertices: Vec<Pt3>,
        faces: Vec<[usize; 3]>,
        colors: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        for v in &vertices {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(CoreError::InvalidParameter(
                    "mesh vertex with non-finite coordinate".into(),
                ));
            }
        }
        if let Some(c) = &colors {
            if c.len() != vertices.len() {
                return Err(CoreError::InvalidParameter(format!(
                    "{} colors for {} vertices",
                    c.len(),
                    vertices.len()
                )));
            }
        }
        let n = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        for f in faces {
            if f.iter().any(|&i| i >= n) {
                return Err(CoreError::InvalidParameter(format!(
                    "face index out of range: {f:?} with {n} vertices"
                )));
            }
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if area > DEGENERATE_FACE_AREA {
                kept.push(f);
            }
        }
        Ok(Self {
            vertices,
            faces: kept,
            colors,
        })
    }

    pub fn vertices(&self) -> &[Pt3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[[f64; 3]]> {
        self.colors.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Corner points of face `i`.
    pub fn triangle(&self, i: usize) -> [Pt3; 3] {
        let [a, b, c] = self.faces[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    /// New mesh with all vertices moved by `t`; faces and colors kept.
    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            colors: self.colors.clone(),
        }
    }

    /// Replace the vertex positions, keeping connectivity.
    ///
    /// The caller must supply exactly one position per existing vertex.
    pub fn with_vertices(&self, vertices: Vec<Pt3>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        TriMesh {
            vertices,
            faces: self.faces.clone(),
            colors: self.colors.clone(),
        }
    }

    /// Area-weighted uniform surface samples.
    ///
    /// Draws `n` points with the supplied RNG: a face is selected by the
    /// area CDF, then a uniform barycentric point inside it.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Pt3>> {
        if self.faces.is_empty() {
            return Err(CoreError::EmptyMesh);
        }
        let areas: Vec<f64> = (0..self.faces.len()).map(|i| self.face_area(i)).collect();
        let total: f64 = areas.iter().sum();
        if total <= 0.0 {
            return Err(CoreError::SamplingFailed);
        }
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a;
            cdf.push(acc);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.gen_range(0.0..total);
            let idx = match cdf.binary_search_by(|p| p.partial_cmp(&target).unwrap()) {
                Ok(i) => i,
                Err(i) => i,
            }
            .min(self.faces.len() - 1);
            let [a, b, c] = self.triangle(idx);
            // Square-root trick for a uniform point in the triangle.
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            let p = a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2);
            out.push(Pt3::from(p));
        }
        Ok(out)
    }

    /// Axis-aligned unit-style box: extents `(sx, sy, sz)` centered at `c`.
    pub fn cuboid(c: Pt3, sx: f64, sy: f64, sz: f64) -> TriMesh {
        let h = Vec3::new(sx / 2.0, sy / 2.0, sz / 2.0);
        let corner = |dx: f64, dy: f64, dz: f64| {
            Pt3::new(c.x + dx * h.x, c.y + dy * h.y, c.z + dz * h.z)
        };
        let vertices = vec![
            corner(-1.0, -1.0, -1.0),
            corner(1.0, -1.0, -1.0),
            corner(1.0, 1.0, -1.0),
            corner(-1.0, 1.0, -1.0),
            corner(-1.0, -1.0, 1.0),
            corner(1.0, -1.0, 1.0),
            corner(1.0, 1.0, 1.0),
            corner(-1.0, 1.0, 1.0),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [1, 2, 6],
            [1, 6, 5],
            [0, 4, 7],
            [0, 7, 3],
        ];
        TriMesh::new(vertices, faces).expect("cuboid is well-formed")
    }

    /// Unit cube centered at the origin, 12 faces.
    pub fn unit_cube() -> TriMesh {
        Self::cuboid(Pt3::origin(), 1.0, 1.0, 1.0)
    }
}

pub fn triangle_area(a: &Pt3, b: &Pt3, c: &Pt3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}
