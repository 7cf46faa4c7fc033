//! Surface ingestion: OBJ reading, object normalization, farthest-point
//! sampling and the line-delimited chart archive.

pub mod archive;
pub mod obj;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub use archive::{read_archive, write_archive, ObjectRecord};
pub use obj::{parse_obj, RawMesh};

/// Normalized point-normal samples with per-point component ownership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceObject {
    pub id: String,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub component_of: Vec<usize>,
    pub extent: f64,
}

impl SurfaceObject {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn component_count(&self) -> usize {
        self.component_of.iter().max().map_or(0, |m| m + 1)
    }

    /// Point ids owned by `component`, ascending.
    pub fn component_points(&self, component: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.component_of[i] == component)
            .collect()
    }

    /// Points grouped per component.
    pub fn component_supports(&self) -> Vec<Vec<Vec3>> {
        let mut out = vec![Vec::new(); self.component_count()];
        for (p, &c) in self.points.iter().zip(&self.component_of) {
            out[c].push(*p);
        }
        out
    }

    pub fn min_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
    }
}

/// Relabels arbitrary ids to `0..k` in order of first appearance.
pub fn contiguous_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Centers the bounding box at the origin and scales uniformly so that the
/// largest axis span becomes 2.
pub fn normalize_points(
    id: impl Into<String>,
    points: &[Vec3],
    normals: &[Vec3],
    components: &[usize],
) -> Result<SurfaceObject> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if normals.len() != points.len() || components.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: normals.len().min(components.len()),
        });
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("point"));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.component_min(*p);
        hi = hi.component_max(*p);
    }
    let span = hi - lo;
    let max_span = span.max_abs();
    if max_span <= 0.0 || !max_span.is_finite() {
        return Err(Error::DegenerateObject);
    }
    let center = (lo + hi) * 0.5;
    let scale = 2.0 / max_span;
    let pts = points
        .iter()
        .map(|p| {
            let q = (*p - center) * scale;
            // Rounding can leave a coordinate a few ulps outside the cube.
            Vec3::new(
                q.x.clamp(-1.0, 1.0),
                q.y.clamp(-1.0, 1.0),
                q.z.clamp(-1.0, 1.0),
            )
        })
        .collect();
    let nrm = normals
        .iter()
        .map(|n| n.normalized(1e-300).unwrap_or(Vec3::Z))
        .collect();
    Ok(SurfaceObject {
        id: id.into(),
        points: pts,
        normals: nrm,
        component_of: contiguous_labels(components),
        extent: 2.0,
    })
}

/// Prunes a mesh and normalizes its vertices. Normals come from the file when
/// every vertex has one, otherwise from area-weighted triangle accumulation.
/// Components are the connected triangle shells.
pub fn normalize_mesh(id: impl Into<String>, mesh: &RawMesh) -> Result<SurfaceObject> {
    let pruned = mesh.prune();
    if pruned.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let normals = match &pruned.normals {
        Some(n) => n.clone(),
        None => pruned.area_weighted_normals(),
    };
    let components = pruned.vertex_components();
    normalize_points(id, &pruned.vertices, &normals, &components)
}

/// Farthest-point sampling over an explicit point list; returns positions
/// into `points`. The first pick is the point farthest from the centroid,
/// ties to the lowest position.
pub fn fps_indices(points: &[Vec3], k: usize) -> Vec<usize> {
    fps_until(points, k, 0.0)
}

/// FPS that stops early once every point lies within `cover` of a pick.
pub fn fps_until(points: &[Vec3], max_k: usize, cover: f64) -> Vec<usize> {
    if points.is_empty() || max_k == 0 {
        return Vec::new();
    }
    let centroid = Vec3::centroid(points);
    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = p.dist_sq(centroid);
        if d > best {
            best = d;
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = points.iter().map(|p| p.dist_sq(points[first])).collect();
    min_d[first] = f64::NEG_INFINITY;
    let cover_sq = cover * cover;
    while chosen.len() < max_k.min(points.len()) {
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if d > far {
                far = d;
                next = i;
            }
        }
        if cover > 0.0 && far <= cover_sq {
            break;
        }
        chosen.push(next);
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = points[i].dist_sq(points[next]);
            if nd < *d {
                *d = nd;
            }
        }
        min_d[next] = f64::NEG_INFINITY;
    }
    chosen
}

/// FPS restricted to one component; returns object point ids.
pub fn fps_sample(obj: &SurfaceObject, component: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let ids = obj.component_points(component);
    if ids.is_empty() {
        return Err(Error::UnknownComponent(component));
    }
    let pts: Vec<Vec3> = ids.iter().map(|&i| obj.points[i]).collect();
    Ok(fps_indices(&pts, k).into_iter().map(|i| ids[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obj_from(points: Vec<Vec3>) -> SurfaceObject {
        let n = points.len();
        normalize_points("t", &points, &vec![Vec3::Z; n], &vec![0; n]).unwrap()
    }

    fn cube_corners(offset: Vec3) -> Vec<Vec3> {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(
                Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) + offset,
            );
        }
        v
    }

    #[test]
    fn offset_cube_is_centered() {
        let o = obj_from(cube_corners(Vec3::new(5.0, 5.0, 5.0)));
        for p in &o.points {
            assert!(p.max_abs() <= 1.0);
        }
        let c = Vec3::centroid(&o.points);
        assert!(c.norm() < 1e-12);
        assert_eq!(o.extent, 2.0);
    }

    #[test]
    fn full_cube_is_unchanged() {
        let pts = cube_corners(Vec3::ZERO)
            .into_iter()
            .map(|p| p * 2.0 - Vec3::new(1.0, 1.0, 1.0))
            .collect::<Vec<_>>();
        let o = obj_from(pts.clone());
        for (a, b) in o.points.iter().zip(&pts) {
            assert!(a.dist(*b) < 1e-9);
        }
    }

    #[test]
    fn segment_scales_along_z() {
        let o = obj_from(vec![Vec3::ZERO, Vec3::new(0.0, 0.0, 4.0)]);
        assert_eq!(o.points[0], Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(o.points[1], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn zero_extent_is_degenerate() {
        let err = normalize_points("t", &[Vec3::X, Vec3::X], &[Vec3::Z; 2], &[0, 0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateObject));
        assert_eq!(err.to_string(), "degenerate object");
    }

    #[test]
    fn mesh_normals_from_area_weighting() {
        let mesh = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        let o = normalize_mesh("tri", &mesh).unwrap();
        for n in &o.normals {
            assert!((n.norm() - 1.0).abs() < 1e-12);
            assert!(n.dist(Vec3::Z) < 1e-12);
        }
    }

    #[test]
    fn fps_collinear_endpoints() {
        let pts = vec![Vec3::ZERO, Vec3::X, Vec3::new(2.0, 0.0, 0.0)];
        let mut picks = fps_indices(&pts, 2);
        picks.sort();
        assert_eq!(picks, vec![0, 2]);
    }

    #[test]
    fn fps_k_one_is_farthest_from_centroid() {
        let pts = vec![Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)];
        assert_eq!(fps_indices(&pts, 1), vec![2]);
    }

    #[test]
    fn fps_all_points_and_oversized_k() {
        let pts: Vec<Vec3> = (0..7).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
        let mut p = fps_indices(&pts, 7);
        p.sort();
        assert_eq!(p, (0..7).collect::<Vec<_>>());
        assert_eq!(fps_indices(&pts, 50).len(), 7);
        // Duplicates are still all returned.
        let dup = vec![Vec3::ZERO; 4];
        assert_eq!(fps_indices(&dup, 4).len(), 4);
    }

    #[test]
    fn fps_unknown_component() {
        let o = obj_from(vec![Vec3::ZERO, Vec3::X]);
        assert!(matches!(fps_sample(&o, 3, 1), Err(Error::UnknownComponent(3))));
    }

    fn min_pairwise(pts: &[Vec3], ids: &[usize]) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                m = m.min(pts[ids[a]].dist(pts[ids[b]]));
            }
        }
        m
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 2..60)) {
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let n = pts.len();
            if let Ok(a) = normalize_points("p", &pts, &vec![Vec3::Z; n], &vec![0; n]) {
                let b = normalize_points("p", &a.points, &a.normals, &a.component_of).unwrap();
                for (p, q) in a.points.iter().zip(&b.points) {
                    prop_assert!(p.dist(*q) < 1e-9);
                }
            }
        }

        #[test]
        fn fps_prefix_spacing_non_increasing(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 3..80)) {
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let all = fps_indices(&pts, pts.len());
            let again = fps_indices(&pts, pts.len());
            prop_assert_eq!(&all, &again);
            let mut prev = f64::INFINITY;
            for k in 2..=all.len() {
                // A k-prefix of the full run equals the k-run.
                prop_assert_eq!(&fps_indices(&pts, k)[..], &all[..k]);
                let m = min_pairwise(&pts, &all[..k]);
                prop_assert!(m <= prev);
                prev = m;
            }
        }
    }
}
