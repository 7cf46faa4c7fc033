//! Seam candidates between charts, the analytic compatibility target, the
//! trainable seam head, discrimination metrics and latent repair.

pub mod eval;
pub mod head;
pub mod repair;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::geom::{Pose, Rotation, Vec3};
use crate::ingest::SurfaceObject;
use crate::nn::{set_distance, NnIndex};

pub use eval::{seam_metrics, SeamMetrics};
pub use head::{train_seam_head, SeamHead, SeamPrediction, TrainConfig, TrainReport};
pub use repair::{build_repair_bank, repair_rank, RankOutcome, RepairMode, RepairTask, Scorer};

pub const W_OVERLAP: f64 = 0.35;
pub const W_CHAMFER: f64 = 0.25;
pub const W_NORMAL: f64 = 0.20;
pub const W_OCCUPANCY: f64 = 0.20;
/// `S_CD = exp(−D_CD / (CD_SCALE · s_min))`.
pub const CD_SCALE: f64 = 0.15;
pub const POSITIVE_COMPAT: f64 = 0.55;
pub const NEGATIVE_COMPAT: f64 = 0.35;
/// Pose refinement is supervised only where `C* ≥ POSE_REFINE_COMPAT`.
pub const POSE_REFINE_COMPAT: f64 = 0.5;
pub const SEPARATION_MARGIN: f64 = 0.2;
pub const COLLISION_THRESHOLD: f64 = 0.5;
/// Collision label fires when at least this fraction of contact-zone
/// samples penetrate the other support.
pub const PENETRATION_LABEL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeamConfig {
    pub eps_contact: f64,
    /// `τ_band = band_factor · s_min`.
    pub band_factor: f64,
    /// Contact zone: points within `d_min + zone_factor · max(s_i, s_j)` of the other support.
    pub zone_factor: f64,
    /// Penetration tolerance as a fraction of `τ_band`.
    pub occ_tol: f64,
}

impl Default for SeamConfig {
    fn default() -> Self {
        SeamConfig {
            eps_contact: 0.05,
            band_factor: 0.1,
            zone_factor: 0.35,
            occ_tol: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompatTerms {
    pub s_ov: f64,
    pub s_cd: f64,
    pub n_cons: f64,
    pub q_occ: f64,
}

impl CompatTerms {
    pub fn blend(&self) -> f64 {
        (W_OVERLAP * self.s_ov
            + W_CHAMFER * self.s_cd
            + W_NORMAL * self.n_cons
            + W_OCCUPANCY * self.q_occ)
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamCandidate {
    pub source: usize,
    pub dest: usize,
    /// Pose of `dest` expressed in the frame of `source`.
    pub coarse: Pose,
    /// `s_source / s_dest`.
    pub scale_ratio: f64,
    pub support_distance: f64,
    pub cross_partition: bool,
    pub terms: CompatTerms,
    pub target: f64,
    pub collision: bool,
    pub valid: bool,
    /// Axis-angle (3), translation (3), log-scale (1) in source chart units.
    pub pose_target: [f64; 7],
}

impl SeamCandidate {
    pub fn pose_features(&self) -> [f64; 13] {
        pose_features(&self.coarse, self.scale_ratio)
    }
}

/// Rotation (9), translation (3), log scale ratio (1).
pub fn pose_features(coarse: &Pose, scale_ratio: f64) -> [f64; 13] {
    let mut f = [0.0; 13];
    f[..9].copy_from_slice(&coarse.rotation.flatten());
    f[9] = coarse.translation.x;
    f[10] = coarse.translation.y;
    f[11] = coarse.translation.z;
    f[12] = scale_ratio.ln();
    f
}

/// Pose features of `dst` seen from `src`, as for a proposed candidate.
pub fn chart_pair_pose_features(src: &Chart, dst: &Chart) -> [f64; 13] {
    pose_features(&src.pose().relative_to(&dst.pose()), src.scale / dst.scale)
}

/// World-space supports of every chart (anchor first), with normals and indices.
pub struct ChartSupports {
    pub points: Vec<Vec<Vec3>>,
    pub normals: Vec<Vec<Vec3>>,
    pub indices: Vec<NnIndex>,
}

impl ChartSupports {
    pub fn new(obj: &SurfaceObject, charts: &[Chart]) -> Self {
        let mut points = Vec::with_capacity(charts.len());
        let mut normals = Vec::with_capacity(charts.len());
        for c in charts {
            let ids = std::iter::once(c.anchor_point).chain(c.support.iter().copied());
            let (p, n): (Vec<Vec3>, Vec<Vec3>) =
                ids.map(|i| (obj.points[i], obj.normals[i])).unzip();
            points.push(p);
            normals.push(n);
        }
        let indices = points.iter().map(|p| NnIndex::new(p)).collect();
        ChartSupports {
            points,
            normals,
            indices,
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if self.points[i].len() <= self.points[j].len() {
            (i, j)
        } else {
            (j, i)
        };
        set_distance(&self.points[a], &self.indices[b])
    }

    /// Largest support distance from each chart's anchor.
    pub fn radii(&self, charts: &[Chart]) -> Vec<f64> {
        charts.iter().zip(&self.points).map(|(c, s)| bounding_radius(c, s)).collect()
    }
}

fn bounding_radius(chart: &Chart, support: &[Vec3]) -> f64 {
    support
        .iter()
        .map(|p| p.dist(chart.anchor))
        .fold(0.0, f64::max)
}

/// All ordered pairs whose supports come closer than `eps_contact`.
/// Labels are left at their defaults; see [`label_candidates`].
pub fn propose_candidates(
    charts: &[Chart],
    supports: &ChartSupports,
    eps_contact: f64,
) -> Result<Vec<SeamCandidate>> {
    if !(eps_contact > 0.0) {
        return Err(Error::InvalidArgument("eps_contact must be positive".into()));
    }
    let radii = supports.radii(charts);
    let mut out = Vec::new();
    for i in 0..charts.len() {
        for j in i + 1..charts.len() {
            if charts[i].anchor.dist(charts[j].anchor) >= radii[i] + radii[j] + eps_contact {
                continue;
            }
            let d = supports.distance(i, j);
            if d < eps_contact {
                out.push(make_candidate(&charts[i], &charts[j], d));
                out.push(make_candidate(&charts[j], &charts[i], d));
            }
        }
    }
    out.sort_by_key(|c| (c.source, c.dest));
    Ok(out)
}

fn make_candidate(src: &Chart, dst: &Chart, d: f64) -> SeamCandidate {
    SeamCandidate {
        source: src.id,
        dest: dst.id,
        coarse: src.pose().relative_to(&dst.pose()),
        scale_ratio: src.scale / dst.scale,
        support_distance: d,
        cross_partition: src.partition != dst.partition,
        terms: CompatTerms::default(),
        target: 0.0,
        collision: false,
        valid: false,
        pose_target: [0.0; 7],
    }
}

/// Contact zone of `a` against `b`: points within `d_min + radius` of `b`.
fn zone(a: &[Vec3], b: &NnIndex, d_min: f64, radius: f64) -> Vec<usize> {
    (0..a.len())
        .filter(|&k| b.nearest_dist(a[k]) <= d_min + radius)
        .collect()
}

/// Compatibility terms between two supports with scales `s_i`, `s_j`.
#[allow(clippy::too_many_arguments)]
pub fn compat_terms(
    xi: &[Vec3],
    ni: &[Vec3],
    si: f64,
    xj: &[Vec3],
    nj: &[Vec3],
    sj: f64,
    cfg: &SeamConfig,
) -> Result<CompatTerms> {
    if xi.is_empty() || xj.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let idx_i = NnIndex::new(xi);
    let idx_j = NnIndex::new(xj);
    compat_terms_indexed(xi, ni, &idx_i, si, xj, nj, &idx_j, sj, cfg)
}

#[allow(clippy::too_many_arguments)]
fn compat_terms_indexed(
    xi: &[Vec3],
    ni: &[Vec3],
    idx_i: &NnIndex,
    si: f64,
    xj: &[Vec3],
    nj: &[Vec3],
    idx_j: &NnIndex,
    sj: f64,
    cfg: &SeamConfig,
) -> Result<CompatTerms> {
    let s_min = si.min(sj);
    let band = cfg.band_factor * s_min;
    let tol = cfg.occ_tol * band;
    let d_min = set_distance(xi, idx_j);
    let reach = cfg.zone_factor * si.max(sj);
    let zi = zone(xi, idx_j, d_min, reach);
    let zj = zone(xj, idx_i, d_min, reach);

    // One direction: zone of a against the full support b.
    let directional = |za: &[usize], xa: &[Vec3], na: &[Vec3], xb: &[Vec3], nb: &[Vec3], ib: &NnIndex| {
        let (mut ov, mut nc, mut occ) = (0.0, 0.0, 0.0);
        for &k in za {
            let h = ib.nearest(xa[k]).expect("nonempty");
            if h.dist() <= band {
                ov += 1.0;
            }
            nc += 0.5 * (1.0 + na[k].dot(nb[h.index]).abs());
            if (xa[k] - xb[h.index]).dot(nb[h.index]) >= -tol {
                occ += 1.0;
            }
        }
        let n = za.len() as f64;
        (ov / n, nc / n, occ / n)
    };
    let (ov_i, nc_i, oc_i) = directional(&zi, xi, ni, xj, nj, idx_j);
    let (ov_j, nc_j, oc_j) = directional(&zj, xj, nj, xi, ni, idx_i);

    let pz_i: Vec<Vec3> = zi.iter().map(|&k| xi[k]).collect();
    let pz_j: Vec<Vec3> = zj.iter().map(|&k| xj[k]).collect();
    let zidx_i = NnIndex::new(&pz_i);
    let zidx_j = NnIndex::new(&pz_j);
    let mean_to = |a: &[Vec3], b: &NnIndex| a.iter().map(|p| b.nearest_dist(*p)).sum::<f64>() / a.len() as f64;
    let d_cd = 0.5 * (mean_to(&pz_i, &zidx_j) + mean_to(&pz_j, &zidx_i));

    Ok(CompatTerms {
        s_ov: 0.5 * (ov_i + ov_j),
        s_cd: (-d_cd / (CD_SCALE * s_min)).exp(),
        n_cons: 0.5 * (nc_i + nc_j),
        q_occ: 0.5 * (oc_i + oc_j),
    })
}

/// Blended compatibility target in [0, 1].
pub fn compat_target(
    xi: &[Vec3],
    ni: &[Vec3],
    si: f64,
    xj: &[Vec3],
    nj: &[Vec3],
    sj: f64,
    cfg: &SeamConfig,
) -> Result<f64> {
    Ok(compat_terms(xi, ni, si, xj, nj, sj, cfg)?.blend())
}

/// One-step point-to-point rigid fit of `src` onto its nearest points in `dst`.
pub fn rigid_fit_step(src: &[Vec3], dst: &NnIndex) -> Option<(Rotation, Vec3)> {
    if src.len() < 3 || dst.is_empty() {
        return None;
    }
    let tgt: Vec<Vec3> = src
        .iter()
        .map(|p| dst.points()[dst.nearest(*p).expect("nonempty").index])
        .collect();
    let cs = Vec3::centroid(src);
    let ct = Vec3::centroid(&tgt);
    let mut h = Matrix3::<f64>::zeros();
    for (p, q) in src.iter().zip(&tgt) {
        let a = *p - cs;
        let b = *q - ct;
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += a[r] * b[c];
            }
        }
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let v = vt.transpose();
    let mut d = Matrix3::<f64>::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let rot = Rotation {
        m: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
    };
    let t = ct - rot.apply(cs);
    Some((rot, t))
}

/// Compatibility terms between charts `i` and `j` of `charts`.
pub fn chart_pair_terms(
    charts: &[Chart],
    supports: &ChartSupports,
    i: usize,
    j: usize,
    cfg: &SeamConfig,
) -> Result<CompatTerms> {
    compat_terms_indexed(
        &supports.points[i],
        &supports.normals[i],
        &supports.indices[i],
        charts[i].scale,
        &supports.points[j],
        &supports.normals[j],
        &supports.indices[j],
        charts[j].scale,
        cfg,
    )
}

/// Labels every candidate: blended target, collision, validity and the pose
/// refinement target. `component_seam(a, b)` reports whether the components
/// owning the two anchors form an attachment edge.
pub fn label_candidates(
    obj: &SurfaceObject,
    charts: &[Chart],
    supports: &ChartSupports,
    cands: &mut [SeamCandidate],
    cfg: &SeamConfig,
    component_seam: impl Fn(usize, usize) -> bool,
) -> Result<()> {
    for c in cands.iter_mut() {
        let (i, j) = (c.source, c.dest);
        let (ci, cj) = (&charts[i], &charts[j]);
        let terms = chart_pair_terms(charts, supports, i, j, cfg)?;
        c.terms = terms;
        c.target = terms.blend();
        c.collision = 1.0 - terms.q_occ >= PENETRATION_LABEL;
        let ki = obj.component_of[ci.anchor_point];
        let kj = obj.component_of[cj.anchor_point];
        let attached = ki == kj || component_seam(ki, kj);
        c.valid = attached && c.target >= POSITIVE_COMPAT && !c.collision;
        c.pose_target = pose_refinement(ci, &supports.indices[i], &supports.points[j]);
    }
    Ok(())
}

/// Refinement that moves `dest`'s support onto `source`'s, in source chart units.
fn pose_refinement(src: &Chart, src_index: &NnIndex, dst_points: &[Vec3]) -> [f64; 7] {
    let Some((r, t)) = rigid_fit_step(dst_points, src_index) else {
        return [0.0; 7];
    };
    let ri = src.frame;
    let r_loc = ri.transpose().mul(&r).mul(&ri);
    let aa = r_loc.to_axis_angle();
    let t_loc = ri.apply_transpose(r.apply(src.anchor) + t - src.anchor) / src.scale;
    [aa.x, aa.y, aa.z, t_loc.x, t_loc.y, t_loc.z, 0.0]
}
