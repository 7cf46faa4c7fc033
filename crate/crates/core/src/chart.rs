//! Canonical local charts: frame construction, neighborhood normalization
//! `X̃ = s⁻¹ Rᵀ (X − a)` and its inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Rotation, Vec3};
use crate::ingest::{fps_until, SurfaceObject};
use crate::nn::NnIndex;
use crate::partition::Partition;
use crate::tokenizer::TokenPair;

/// Projected-norm threshold below which a tangent candidate is rejected.
pub const DEGENERACY_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartConfig {
    pub radius: f64,
    pub min_neighbors: usize,
    pub reference_axis: Vec3,
    /// Anchor FPS stops once every partition point is within
    /// `cover * radius` of an anchor.
    pub cover: f64,
    pub max_anchors: usize,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            radius: 0.15,
            min_neighbors: 8,
            reference_axis: Vec3::X,
            cover: 0.75,
            max_anchors: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: usize,
    /// Object point id of the anchor.
    pub anchor_point: usize,
    pub anchor: Vec3,
    pub normal: Vec3,
    pub scale: f64,
    pub frame: Rotation,
    pub partition: usize,
    /// Object point ids of the neighborhood (anchor excluded).
    pub support: Vec<usize>,
    pub local_points: Vec<Vec3>,
    pub local_normals: Vec<Vec3>,
    pub token: Option<TokenPair>,
    /// Frame axis-angle (3) followed by the anchor offset from its
    /// partition centroid (3).
    pub pose_residual: [f64; 6],
}

impl Chart {
    pub fn pose(&self) -> Pose {
        Pose::new(self.frame, self.anchor, self.scale)
    }

    /// Object-space positions of the support.
    pub fn world_points(&self) -> Vec<Vec3> {
        self.local_points.iter().map(|q| place_back(self, *q)).collect()
    }

    pub fn world_normals(&self) -> Vec<Vec3> {
        self.local_normals
            .iter()
            .map(|n| self.frame.apply(*n))
            .collect()
    }
}

fn sign_fixed(v: Vec3) -> Vec3 {
    let a = v.to_array();
    let mut k = 0;
    for i in 1..3 {
        if a[i].abs() > a[k].abs() {
            k = i;
        }
    }
    if a[k] < 0.0 {
        -v
    } else {
        v
    }
}

fn project_tangent(v: Vec3, z: Vec3) -> Vec3 {
    v - z * v.dot(z)
}

/// Principal in-plane direction of `points`, or `None` when the tangential
/// spread is isotropic.
fn principal_tangent(z: Vec3, points: &[Vec3]) -> Option<Vec3> {
    let u = fallback_axis(z);
    let v = z.cross(u);
    let c = Vec3::centroid(points);
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        let (a, b) = (d.dot(u), d.dot(v));
        suu += a * a;
        suv += a * b;
        svv += b * b;
    }
    let trace = suu + svv;
    let gap = ((suu - svv).powi(2) + 4.0 * suv * suv).sqrt();
    if trace <= 0.0 || gap <= 1e-9 * trace {
        return None;
    }
    let theta = 0.5 * (2.0 * suv).atan2(suu - svv);
    let dir = u * theta.cos() + v * theta.sin();
    project_tangent(dir, z)
        .normalized(DEGENERACY_EPS)
        .map(sign_fixed)
}

/// Normalized tangent projection of the first canonical axis not parallel to `z`.
fn fallback_axis(z: Vec3) -> Vec3 {
    for e in [Vec3::X, Vec3::Y, Vec3::Z] {
        if let Some(t) = project_tangent(e, z).normalized(DEGENERACY_EPS) {
            return t;
        }
    }
    unreachable!("a unit normal cannot be parallel to all three axes")
}

/// Right-handed frame with third column `normal`.
pub fn canonical_frame(normal: Vec3, local_points: &[Vec3], reference: Vec3) -> Result<Rotation> {
    let z = normal
        .normalized(1e-12)
        .ok_or(Error::InvalidArgument("zero normal".into()))?;
    if local_points.is_empty() {
        return Err(Error::EmptyChart);
    }
    let tangent = project_tangent(reference, z)
        .normalized(DEGENERACY_EPS)
        .or_else(|| principal_tangent(z, local_points))
        .unwrap_or_else(|| fallback_axis(z));
    // Re-orthogonalize against the normal once more for round-off.
    let x = project_tangent(tangent, z).normalized(1e-12).unwrap();
    let y = z.cross(x);
    Ok(Rotation::from_columns(x, y, z))
}

/// Normalizes a neighborhood around `anchor`.
pub fn normalize_neighborhood(
    anchor: Vec3,
    frame: &Rotation,
    neighbors: &[Vec3],
) -> Result<(f64, Vec<Vec3>)> {
    let scale = neighbors
        .iter()
        .map(|p| p.dist(anchor))
        .fold(0.0, f64::max);
    if neighbors.is_empty() || scale <= 0.0 {
        return Err(Error::EmptyChart);
    }
    let local = neighbors
        .iter()
        .map(|p| frame.apply_transpose(*p - anchor) / scale)
        .collect();
    Ok((scale, local))
}

/// `q = a + s R q̃`.
pub fn place_back(chart: &Chart, local: Vec3) -> Vec3 {
    chart.anchor + chart.frame.apply(local) * chart.scale
}

/// Builds charts over one object, with per-partition neighbor indices.
pub struct ChartBuilder<'a> {
    obj: &'a SurfaceObject,
    partition: &'a Partition,
    cfg: ChartConfig,
    members: Vec<Vec<usize>>,
    indices: Vec<NnIndex>,
    centroids: Vec<Vec3>,
}

impl<'a> ChartBuilder<'a> {
    pub fn new(obj: &'a SurfaceObject, partition: &'a Partition, cfg: ChartConfig) -> Self {
        let members: Vec<Vec<usize>> = (0..partition.count).map(|k| partition.members(k)).collect();
        let indices = members
            .iter()
            .map(|m| NnIndex::new(&m.iter().map(|&i| obj.points[i]).collect::<Vec<_>>()))
            .collect();
        let centroids = partition.centroids(&obj.points);
        ChartBuilder {
            obj,
            partition,
            cfg,
            members,
            indices,
            centroids,
        }
    }

    /// Neighbors within the radius inside the anchor's partition, expanded by
    /// k-NN to `min_neighbors` when the ball is sparse. The anchor is excluded.
    pub fn neighbors(&self, anchor_id: usize) -> Result<Vec<usize>> {
        let part = *self
            .partition
            .assign
            .get(anchor_id)
            .ok_or(Error::InvalidArgument(format!("anchor {anchor_id} out of range")))?;
        let members = &self.members[part];
        let index = &self.indices[part];
        let a = self.obj.points[anchor_id];
        let mut local: Vec<usize> = index.within(a, self.cfg.radius);
        if local.len() < self.cfg.min_neighbors + 1 {
            local = index
                .knn(a, self.cfg.min_neighbors + 1)
                .into_iter()
                .map(|h| h.index)
                .collect();
            local.sort_unstable();
        }
        Ok(local
            .into_iter()
            .map(|li| members[li])
            .filter(|&i| i != anchor_id)
            .collect())
    }

    pub fn build(&self, id: usize, anchor_id: usize) -> Result<Chart> {
        let support = self.neighbors(anchor_id)?;
        if support.is_empty() {
            return Err(Error::EmptyChart);
        }
        let anchor = self.obj.points[anchor_id];
        let normal = self.obj.normals[anchor_id];
        let world: Vec<Vec3> = support.iter().map(|&i| self.obj.points[i]).collect();
        let frame = canonical_frame(normal, &world, self.cfg.reference_axis)?;
        let (scale, local_points) = normalize_neighborhood(anchor, &frame, &world)?;
        let local_normals = support
            .iter()
            .map(|&i| frame.apply_transpose(self.obj.normals[i]))
            .collect();
        let partition = self.partition.assign[anchor_id];
        let aa = frame.to_axis_angle();
        let off = anchor - self.centroids[partition];
        Ok(Chart {
            id,
            anchor_point: anchor_id,
            anchor,
            normal: frame.column(2),
            scale,
            frame,
            partition,
            support,
            local_points,
            local_normals,
            token: None,
            pose_residual: [aa.x, aa.y, aa.z, off.x, off.y, off.z],
        })
    }

    /// FPS anchors per partition (in partition order) until coverage.
    pub fn anchors(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for m in &self.members {
            let pts: Vec<Vec3> = m.iter().map(|&i| self.obj.points[i]).collect();
            let picks = fps_until(&pts, self.cfg.max_anchors, self.cfg.cover * self.cfg.radius);
            out.extend(picks.into_iter().map(|i| m[i]));
        }
        out
    }

    /// All charts for the object; anchors whose neighborhood is empty are skipped.
    pub fn build_all(&self) -> Vec<Chart> {
        let mut charts = Vec::new();
        for a in self.anchors() {
            if let Ok(c) = self.build(charts.len(), a) {
                charts.push(c);
            }
        }
        charts
    }
}

const MORTON_BITS: u32 = 10;

fn spread_bits(mut v: u64) -> u64 {
    v &= 0x3ff;
    v = (v | (v << 16)) & 0x0300_00ff;
    v = (v | (v << 8)) & 0x0300_f00f;
    v = (v | (v << 4)) & 0x030c_30c3;
    (v | (v << 2)) & 0x0924_9249
}

/// Interleaved 10-bit code of `p` clamped to the `[-1, 1]` cube.
pub fn morton_key(p: Vec3) -> u64 {
    let max = ((1u64 << MORTON_BITS) - 1) as f64;
    let q = |v: f64| (((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * max).round()) as u64;
    spread_bits(q(p.x)) | (spread_bits(q(p.y)) << 1) | (spread_bits(q(p.z)) << 2)
}

/// Chart ids in serialization order: partition-major, then anchor Morton
/// code, then id.
pub fn serialization_order(charts: &[Chart]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..charts.len()).collect();
    ids.sort_by_key(|&i| (charts[i].partition, morton_key(charts[i].anchor), charts[i].id));
    ids.into_iter().map(|i| charts[i].id).collect()
}
