//! Spatial acceleration structures: a kd-tree for nearest-neighbor point
//! queries and a BVH for point-to-triangle distance queries.

use crate::math::{Pt3, Vec3};
use crate::mesh::TriMesh;

/// Kd-tree over a fixed point set. Queries return the index of the
/// nearest stored point and the squared distance.
pub struct KdTree3 {
    points: Vec<Pt3>,
    nodes: Vec<KdNode>,
    root: usize,
}

struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree3 {
    pub fn build(points: &[Pt3]) -> KdTree3 {
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut indices[..], 0, &mut nodes).unwrap_or(usize::MAX);
        KdTree3 {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build_rec(
        points: &[Pt3],
        indices: &mut [usize],
        depth: usize,
        nodes: &mut Vec<KdNode>,
    ) -> Option<usize> {
        if indices.is_empty() {
            return None;
        }
        let axis = depth % 3;
        // Total order (coordinate, index) keeps the build deterministic.
        indices.sort_unstable_by(|&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = indices.len() / 2;
        let point = indices[mid];
        let node_idx = nodes.len();
        nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = indices.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes[node_idx].left = left;
        nodes[node_idx].right = right;
        Some(node_idx)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Index and squared distance of the nearest stored point.
    ///
    /// Panics on an empty tree.
    pub fn nearest(&self, query: &Pt3) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest on empty kd-tree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(self.root, query, &mut best);
        best
    }

    fn nearest_rec(&self, node_idx: usize, query: &Pt3, best: &mut (usize, f64)) {
        let node = &self.nodes[node_idx];
        let p = &self.points[node.point];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 || (d2 == best.1 && node.point < best.0) {
            *best = (node.point, d2);
        }
        let delta = query[node.axis] - p[node.axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.nearest_rec(n, query, best);
        }
        if let Some(f) = far {
            if delta * delta <= best.1 {
                self.nearest_rec(f, query, best);
            }
        }
    }
}

/// Closest point on a triangle plus its barycentric coordinates
/// `(w_a, w_b, w_c)`.
pub fn closest_point_on_triangle(p: &Pt3, a: &Pt3, b: &Pt3, c: &Pt3) -> (Pt3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (Pt3::from(a.coords + ab * v), [1.0 - v, v, 0.0]);
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (Pt3::from(a.coords + ac * w), [1.0 - w, 0.0, w]);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (
            Pt3::from(b.coords + (c - b) * w),
            [0.0, 1.0 - w, w],
        );
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (
        Pt3::from(a.coords + ab * v + ac * w),
        [1.0 - v - w, v, w],
    )
}

/// Result of a nearest-triangle query.
#[derive(Debug, Clone, Copy)]
pub struct NearestTriangle {
    pub face: usize,
    pub point: Pt3,
    pub dist_squared: f64,
    pub barycentric: [f64; 3],
}

/// Median-split BVH over mesh triangles for nearest-surface queries.
pub struct TriangleBvh {
    triangles: Vec<[Pt3; 3]>,
    nodes: Vec<BvhNode>,
}

struct BvhNode {
    min: Vec3,
    max: Vec3,
    // Leaf: range into `order`; internal: child node indices.
    kind: NodeKind,
}

enum NodeKind {
    Leaf(Vec<usize>),
    Internal(usize, usize),
}

const LEAF_SIZE: usize = 4;

impl TriangleBvh {
    pub fn build(mesh: &TriMesh) -> TriangleBvh {
        let triangles: Vec<[Pt3; 3]> = (0..mesh.faces().len()).map(|i| mesh.triangle(i)).collect();
        Self::build_from_triangles(triangles)
    }

    pub fn build_from_triangles(triangles: Vec<[Pt3; 3]>) -> TriangleBvh {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            Self::build_rec(&triangles, &mut order[..], &mut nodes);
        }
        TriangleBvh { triangles, nodes }
    }

    fn tri_bounds(tri: &[Pt3; 3]) -> (Vec3, Vec3) {
        let mut min = tri[0].coords;
        let mut max = tri[0].coords;
        for p in &tri[1..] {
            min = min.inf(&p.coords);
            max = max.sup(&p.coords);
        }
        (min, max)
    }

    fn build_rec(triangles: &[[Pt3; 3]], order: &mut [usize], nodes: &mut Vec<BvhNode>) -> usize {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for &t in order.iter() {
            let (lo, hi) = Self::tri_bounds(&triangles[t]);
            min = min.inf(&lo);
            max = max.sup(&hi);
        }
        let node_idx = nodes.len();
        nodes.push(BvhNode {
            min,
            max,
            kind: NodeKind::Leaf(Vec::new()),
        });
        if order.len() <= LEAF_SIZE {
            nodes[node_idx].kind = NodeKind::Leaf(order.to_vec());
            return node_idx;
        }
        let extent = max - min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let centroid = |t: usize| {
            (triangles[t][0].coords + triangles[t][1].coords + triangles[t][2].coords) / 3.0
        };
        order.sort_unstable_by(|&a, &b| {
            centroid(a)[axis]
                .partial_cmp(&centroid(b)[axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = order.len() / 2;
        let (lo, hi) = order.split_at_mut(mid);
        let left = Self::build_rec(triangles, lo, nodes);
        let right = Self::build_rec(triangles, hi, nodes);
        nodes[node_idx].kind = NodeKind::Internal(left, right);
        node_idx
    }

    fn aabb_dist_squared(min: &Vec3, max: &Vec3, p: &Pt3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = p[a];
            let d = if v < min[a] {
                min[a] - v
            } else if v > max[a] {
                v - max[a]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }

    /// Nearest triangle to `p`; ties broken toward the lowest face index.
    ///
    /// Panics on an empty BVH.
    pub fn nearest(&self, p: &Pt3) -> NearestTriangle {
        assert!(!self.triangles.is_empty(), "nearest on empty BVH");
        let mut best = NearestTriangle {
            face: usize::MAX,
            point: Pt3::origin(),
            dist_squared: f64::INFINITY,
            barycentric: [0.0; 3],
        };
        self.nearest_rec(0, p, &mut best);
        best
    }

    fn nearest_rec(&self, node_idx: usize, p: &Pt3, best: &mut NearestTriangle) {
        let node = &self.nodes[node_idx];
        if Self::aabb_dist_squared(&node.min, &node.max, p) > best.dist_squared {
            return;
        }
        match &node.kind {
            NodeKind::Leaf(tris) => {
                for &t in tris {
                    let [a, b, c] = &self.triangles[t];
                    let (q, bary) = closest_point_on_triangle(p, a, b, c);
                    let d2 = (q - p).norm_squared();
                    if d2 < best.dist_squared
                        || (d2 == best.dist_squared && t < best.face)
                    {
                        *best = NearestTriangle {
                            face: t,
                            point: q,
                            dist_squared: d2,
                            barycentric: bary,
                        };
                    }
                }
            }
            NodeKind::Internal(l, r) => {
                let dl = {
                    let n = &self.nodes[*l];
                    Self::aabb_dist_squared(&n.min, &n.max, p)
                };
                let dr = {
                    let n = &self.nodes[*r];
                    Self::aabb_dist_squared(&n.min, &n.max, p)
                };
                // Visit the closer child first; on ties visit left first so
                // lower face indices win deterministic tie-breaks.
                if dl <= dr {
                    self.nearest_rec(*l, p, best);
                    self.nearest_rec(*r, p, best);
                } else {
                    self.nearest_rec(*r, p, best);
                    self.nearest_rec(*l, p, best);
                }
            }
        }
    }
}
