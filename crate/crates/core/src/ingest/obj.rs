//! Reader for the `v` / `vn` / `f` subset of Wavefront OBJ.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Triangle soup as read from disk, before normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

fn resolve(token: &str, count: usize, line: usize, what: &str) -> Result<usize> {
    let raw: i64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} index {token:?}"),
    })?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(Error::Parse {
            line,
            message: format!("{what} index {raw} out of range (have {count})"),
        });
    }
    Ok(resolved as usize)
}

fn parse_floats(parts: &[&str], line: usize) -> Result<Vec3> {
    if parts.len() < 3 {
        return Err(Error::Parse {
            line,
            message: "expected three coordinates".into(),
        });
    }
    let mut c = [0.0f64; 3];
    for (slot, s) in c.iter_mut().zip(parts) {
        *slot = s.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad number {s:?}"),
        })?;
        if !slot.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite number {s:?}"),
            });
        }
    }
    Ok(Vec3::from_array(c))
}

/// Parses OBJ text. Polygons with more than three corners are fan-triangulated;
/// lines other than `v`, `vn` and `f` are ignored.
pub fn parse_obj(text: &[u8]) -> Result<RawMesh> {
    let text = String::from_utf8_lossy(text);
    let mut vertices = Vec::new();
    let mut vn = Vec::new();
    let mut triangles = Vec::new();
    let mut vertex_normals: HashMap<usize, usize> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => vertices.push(parse_floats(&rest, line)?),
            "vn" => vn.push(parse_floats(&rest, line)?),
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        message: "face needs at least three corners".into(),
                    });
                }
                let mut corners = Vec::with_capacity(rest.len());
                for corner in &rest {
                    let mut fields = corner.split('/');
                    let v = resolve(fields.next().unwrap_or(""), vertices.len(), line, "vertex")?;
                    let _vt = fields.next();
                    if let Some(n) = fields.next().filter(|s| !s.is_empty()) {
                        let n = resolve(n, vn.len(), line, "normal")?;
                        vertex_normals.entry(v).or_insert(n);
                    }
                    corners.push(v);
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() || triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let normals = if !vertex_normals.is_empty() && vertex_normals.len() == vertices.len() {
        Some(
            (0..vertices.len())
                .map(|v| vn[vertex_normals[&v]])
                .collect(),
        )
    } else {
        None
    };
    Ok(RawMesh {
        vertices,
        triangles,
        normals,
    })
}

/// Serializes a mesh back to OBJ (used for fixtures and synthetic exports).
pub fn write_obj(mesh: &RawMesh) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(ns) = &mesh.normals {
        for n in ns {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
        for t in &mesh.triangles {
            let _ = writeln!(
                out,
                "f {a}//{a} {b}//{b} {c}//{c}",
                a = t[0] + 1,
                b = t[1] + 1,
                c = t[2] + 1
            );
        }
    } else {
        for t in &mesh.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    out
}

impl RawMesh {
    /// Drops degenerate triangles, triangles on edges shared by more than two
    /// faces, and vertices no remaining triangle references.
    pub fn prune(&self) -> RawMesh {
        let area_ok = |t: &[usize; 3]| {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return false;
            }
            let [a, b, c] = t.map(|i| self.vertices[i]);
            (b - a).cross(c - a).norm() > 0.0
        };
        let tris: Vec<[usize; 3]> = self.triangles.iter().copied().filter(area_ok).collect();

        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        let edge = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
        for t in &tris {
            for k in 0..3 {
                *edge_use.entry(edge(t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        let tris: Vec<[usize; 3]> = tris
            .into_iter()
            .filter(|t| (0..3).all(|k| edge_use[&edge(t[k], t[(k + 1) % 3])] <= 2))
            .collect();

        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut normals = self.normals.as_ref().map(|_| Vec::new());
        for t in &tris {
            for &v in t {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                    if let (Some(out), Some(src)) = (normals.as_mut(), self.normals.as_ref()) {
                        out.push(src[v]);
                    }
                }
            }
        }
        let triangles = tris.iter().map(|t| t.map(|v| remap[v])).collect();
        RawMesh {
            vertices,
            triangles,
            normals,
        }
    }

    /// Area-weighted vertex normals accumulated from triangle cross products.
    pub fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            // Cross product magnitude is twice the area, so this is area-weighted.
            let n = (b - a).cross(c - a);
            for &v in t {
                acc[v] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.normalized(1e-300).unwrap_or(Vec3::Z))
            .collect()
    }

    /// Connected components over shared triangle vertices; ids contiguous in
    /// order of first vertex.
    pub fn vertex_components(&self) -> Vec<usize> {
        let mut dsu = crate::partition::Dsu::new(self.vertices.len());
        for t in &self.triangles {
            dsu.union(t[0], t[1]);
            dsu.union(t[1], t[2]);
        }
        dsu.labels()
    }
}
