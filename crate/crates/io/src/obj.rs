//! Wavefront OBJ meshes: vertices, optional vertex colors, triangle and
//! polygon faces (fan-triangulated). Unknown directives are ignored.

use std::fmt::Write as _;
use std::path::Path;

use scenefit_core::math::Pt3;
use scenefit_core::mesh::TriMesh;

use crate::error::IoError;
use crate::Result;

pub fn save_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    match mesh.colors() {
        Some(colors) => {
            for (v, c) in mesh.vertices().iter().zip(colors) {
                writeln!(out, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]).unwrap();
            }
        }
        None => {
            for v in mesh.vertices() {
                writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
            }
        }
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    crate::atomic_write(path, out.as_bytes())
}

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let body = std::fs::read_to_string(path)?;
    let mut vertices: Vec<Pt3> = Vec::new();
    let mut colors: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (lineno, raw) in body.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let nums: Vec<f64> = parts
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| {
                            IoError::parse(path, lineno, format!("bad vertex component {t:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                match nums.len() {
                    3 => vertices.push(Pt3::new(nums[0], nums[1], nums[2])),
                    6 => {
                        vertices.push(Pt3::new(nums[0], nums[1], nums[2]));
                        colors.push([nums[3], nums[4], nums[5]]);
                    }
                    // "v x y z w" homogeneous form: ignore w.
                    4 => vertices.push(Pt3::new(nums[0], nums[1], nums[2])),
                    n => {
                        return Err(IoError::parse(
                            path,
                            lineno,
                            format!("vertex with {n} components"),
                        ))
                    }
                }
            }
            Some("f") => {
                let mut idx: Vec<usize> = Vec::new();
                for token in parts {
                    let vertex_field = token.split('/').next().unwrap_or("");
                    let raw: i64 = vertex_field.parse().map_err(|_| {
                        IoError::parse(path, lineno, format!("bad face index {token:?}"))
                    })?;
                    let resolved = if raw > 0 {
                        (raw - 1) as usize
                    } else if raw < 0 {
                        let back = (-raw) as usize;
                        if back > vertices.len() {
                            return Err(IoError::parse(
                                path,
                                lineno,
                                format!("relative index {raw} before any vertex"),
                            ));
                        }
                        vertices.len() - back
                    } else {
                        return Err(IoError::parse(path, lineno, "face index 0"));
                    };
                    if resolved >= vertices.len() {
                        return Err(IoError::parse(
                            path,
                            lineno,
                            format!("face index {raw} out of range"),
                        ));
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(IoError::parse(
                        path,
                        lineno,
                        format!("face with {} vertices", idx.len()),
                    ));
                }
                // Fan triangulation of polygons.
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // vt, vn, o, g, s, usemtl, mtllib, l, p, ...
            Some(_) => {}
            None => {}
        }
    }

    let colors = if colors.len() == vertices.len() && !colors.is_empty() {
        Some(colors)
    } else {
        None
    };
    TriMesh::with_colors(vertices, faces, colors).map_err(IoError::from)
}
