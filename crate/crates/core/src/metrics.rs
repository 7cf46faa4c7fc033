//! Structural evaluator. Every metric is a pure function of geometry and the
//! single object-adaptive threshold.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::nn::NnIndex;

pub const TAU_FRACTION: f64 = 0.02;
pub const TAU_FLOOR: f64 = 1e-3;
pub const NORMAL_FLOOR: f64 = 1e-6;
pub const OVERLAP_SCALE: f64 = 0.12;
pub const BOUNDARY_CD_SCALE: f64 = 0.15;
pub const IQ_TEMPERATURE: f64 = 0.15;
pub const BC_TEMPERATURE: f64 = 0.05;
pub const UNIT_CAP: f64 = 64.0;
pub const FID_RIDGE: f64 = 1e-9;
pub const STRUCT_DIM: usize = 11;
pub const BOOTSTRAP_RESAMPLES: usize = 5000;

pub fn adaptive_tau(extent: f64) -> f64 {
    (TAU_FRACTION * extent).max(TAU_FLOOR)
}

fn directional(a: &[Vec3], b: &NnIndex) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for p in a {
        let d = b.nearest_dist(*p);
        sum += d;
        max = max.max(d);
    }
    (sum / a.len() as f64, max)
}

/// `(CD, HD)`; both empty → 0, exactly one empty → 1.
pub fn chamfer_hausdorff(a: &[Vec3], b: &[Vec3]) -> (f64, f64) {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return (0.0, 0.0),
        (true, false) | (false, true) => return (1.0, 1.0),
        _ => {}
    }
    let (ia, ib) = (NnIndex::new(a), NnIndex::new(b));
    let (mab, xab) = directional(a, &ib);
    let (mba, xba) = directional(b, &ia);
    (0.5 * (mab + mba), xab.max(xba))
}

fn within_fraction(a: &[Vec3], b: &NnIndex, tau: f64) -> f64 {
    a.iter().filter(|p| b.nearest_dist(**p) < tau).count() as f64 / a.len() as f64
}

/// `S_sep`; no predicted component → 0, components but no pair → 1.
pub fn separation_score(components: &[Vec<Vec3>], tau: f64) -> f64 {
    let nonempty: Vec<&Vec<Vec3>> = components.iter().filter(|c| !c.is_empty()).collect();
    if nonempty.is_empty() {
        return 0.0;
    }
    if nonempty.len() < 2 {
        return 1.0;
    }
    let idx: Vec<NnIndex> = nonempty.iter().map(|c| NnIndex::new(c)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..nonempty.len() {
        for j in i + 1..nonempty.len() {
            total += 0.5 * (within_fraction(nonempty[i], &idx[j], tau) + within_fraction(nonempty[j], &idx[i], tau));
            pairs += 1;
        }
    }
    1.0 - total / pairs as f64
}

/// `C_rate` with `predicted[k]` owned by ground-truth component `k`.
pub fn contamination_rate(predicted: &[Vec<Vec3>], supports: &[Vec<Vec3>], tau: f64) -> Result<f64> {
    if predicted.len() != supports.len() {
        return Err(Error::DimensionMismatch {
            expected: supports.len(),
            got: predicted.len(),
        });
    }
    let total: usize = predicted.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(1.0);
    }
    if supports.iter().any(Vec::is_empty) {
        return Err(Error::EmptyPointSet);
    }
    if supports.len() < 2 {
        return Ok(0.0);
    }
    let own: Vec<NnIndex> = supports.iter().map(|s| NnIndex::new(s)).collect();
    let mut flagged = 0usize;
    for (k, pts) in predicted.iter().enumerate() {
        for &x in pts {
            let d_own = own[k].nearest_dist(x);
            let d_other = (0..own.len())
                .filter(|&j| j != k)
                .map(|j| own[j].nearest_dist(x))
                .fold(f64::INFINITY, f64::min);
            if contaminated(d_own, d_other, tau) {
                flagged += 1;
            }
        }
    }
    Ok(flagged as f64 / total as f64)
}

fn contaminated(d_own: f64, d_other: f64, tau: f64) -> bool {
    d_other + tau < d_own || (d_other < tau && d_own > tau)
}

/// Mean floored cosine between paired normals.
pub fn normal_consistency(pred: &[Vec3], reference: &[Vec3]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let s: f64 = pred
        .iter()
        .zip(reference)
        .map(|(a, b)| a.dot(*b) / (a.norm().max(NORMAL_FLOOR) * b.norm().max(NORMAL_FLOOR)))
        .sum();
    Ok(s / pred.len() as f64)
}

/// Per-object evaluator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub chamfer: f64,
    pub hausdorff: f64,
    pub contamination: f64,
    pub separation: f64,
    pub normal_consistency: f64,
    pub support_violations: usize,
    pub tau: f64,
}

/// Full report for one object. `pred[k]`/`pred_normals[k]` are owned by
/// component `k`; reference normals are taken at each predicted point's nearest
/// reference sample.
pub fn structural_report(
    pred: &[Vec<Vec3>],
    pred_normals: &[Vec<Vec3>],
    supports: &[Vec<Vec3>],
    support_normals: &[Vec<Vec3>],
    extent: f64,
    support_violations: usize,
) -> Result<StructuralReport> {
    let tau = adaptive_tau(extent);
    let all_pred: Vec<Vec3> = pred.iter().flatten().copied().collect();
    let all_ref: Vec<Vec3> = supports.iter().flatten().copied().collect();
    let (chamfer, hausdorff) = chamfer_hausdorff(&all_pred, &all_ref);
    let contamination = contamination_rate(pred, supports, tau)?;
    let separation = separation_score(pred, tau);
    let normal_consistency = if all_pred.is_empty() || all_ref.is_empty() {
        0.0
    } else {
        let ref_n: Vec<Vec3> = support_normals.iter().flatten().copied().collect();
        let idx = NnIndex::new(&all_ref);
        let matched = all_pred
            .iter()
            .map(|p| idx.nearest(*p).map(|h| ref_n[h.index]))
            .collect::<Result<Vec<_>>>()?;
        let pn: Vec<Vec3> = pred_normals.iter().flatten().copied().collect();
        normal_consistency(&pn, &matched)?
    };
    Ok(StructuralReport {
        chamfer,
        hausdorff,
        contamination,
        separation,
        normal_consistency,
        support_violations,
        tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructFeatures(pub [f64; STRUCT_DIM]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub features: StructFeatures,
    pub iq_raw: f64,
    pub bc_raw: f64,
    pub iq: f64,
    pub bc: f64,
    /// Fewer than two units: raw statistics are the neutral 1 and 0.
    pub degenerate: bool,
}

fn bbox(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.component_min(*p);
        hi = hi.component_max(*p);
    }
    (lo, hi)
}

fn unit_extent(points: &[Vec3]) -> f64 {
    let (lo, hi) = bbox(points);
    (hi - lo).max_abs()
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::ZERO, |a, p| a + *p) * (1.0 / points.len() as f64)
}

/// Farthest decile from the unit centroid, at least one point.
pub fn boundary_samples(points: &[Vec3]) -> Vec<Vec3> {
    let c = centroid(points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].dist(c).total_cmp(&points[a].dist(c)).then(a.cmp(&b)));
    let k = points.len().div_ceil(10).max(1);
    order[..k].iter().map(|&i| points[i]).collect()
}

/// Undirected k-NN edges over centroids, `k = min(3, n − 1)`.
pub fn centroid_knn_edges(centroids: &[Vec3]) -> Vec<(usize, usize)> {
    let n = centroids.len();
    let k = 3.min(n.saturating_sub(1));
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            centroids[i]
                .dist_sq(centroids[a])
                .total_cmp(&centroids[i].dist_sq(centroids[b]))
                .then(a.cmp(&b))
        });
        for &j in &others[..k] {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges.into_iter().collect()
}

/// `(O_ij, B_ij)` for one unit pair.
pub fn pair_statistics(a: &[Vec3], b: &[Vec3]) -> (f64, f64) {
    let s = unit_extent(a).max(unit_extent(b)).max(f64::MIN_POSITIVE);
    let r = OVERLAP_SCALE * s;
    let (ia, ib) = (NnIndex::new(a), NnIndex::new(b));
    let hits = a.iter().filter(|p| ib.nearest_dist(**p) <= r).count()
        + b.iter().filter(|p| ia.nearest_dist(**p) <= r).count();
    let o = hits as f64 / (a.len() + b.len()) as f64;
    let (cd, _) = chamfer_hausdorff(&boundary_samples(a), &boundary_samples(b));
    let bij = (-cd / (BOUNDARY_CD_SCALE * s)).exp() * (1.0 - o);
    (o, bij)
}

/// Feature vector plus IQ/BC against reference means.
pub fn struct_features(units: &[Vec<Vec3>], mu_iq: f64, mu_bc: f64) -> Result<AssemblyStats> {
    if units.is_empty() || units.iter().any(Vec::is_empty) {
        return Err(Error::EmptyPointSet);
    }
    let all: Vec<Vec3> = units.iter().flatten().copied().collect();
    if all.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("unit points"));
    }
    let (lo, hi) = bbox(&all);
    let ext = hi - lo;
    let object_extent = ext.max_abs().max(f64::MIN_POSITIVE);
    let mut f = [0.0; STRUCT_DIM];
    let mut sorted_ext = [ext.x, ext.y, ext.z];
    sorted_ext.sort_by(|a, b| b.total_cmp(a));
    for k in 0..3 {
        f[k] = sorted_ext[k] / object_extent;
    }
    let c = centroid(&all);
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for p in &all {
        let d = *p - c;
        for r in 0..3 {
            for s in 0..3 {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    cov /= all.len() as f64;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let ev_sum: f64 = ev.iter().sum();
    for k in 0..3 {
        f[3 + k] = if ev_sum > 0.0 { ev[k] / ev_sum } else { 0.0 };
    }
    f[6] = (units.len() as f64 / UNIT_CAP).min(1.0);
    f[7] = units.iter().map(|u| unit_extent(u)).sum::<f64>() / units.len() as f64 / object_extent;
    let cents: Vec<Vec3> = units.iter().map(|u| centroid(u)).collect();
    let cc = centroid(&cents);
    f[8] = (cents.iter().map(|p| p.dist_sq(cc)).sum::<f64>() / cents.len() as f64).sqrt() / object_extent;
    let edges = centroid_knn_edges(&cents);
    let degenerate = edges.is_empty();
    let (iq_raw, bc_raw) = if degenerate {
        (1.0, 0.0)
    } else {
        let (mut so, mut sb) = (0.0, 0.0);
        for &(i, j) in &edges {
            let (o, b) = pair_statistics(&units[i], &units[j]);
            so += o;
            sb += b;
        }
        let m = edges.len() as f64;
        (1.0 - so / m, sb / m)
    };
    f[9] = iq_raw;
    f[10] = bc_raw;
    Ok(AssemblyStats {
        features: StructFeatures(f),
        iq_raw,
        bc_raw,
        iq: (-(iq_raw - mu_iq).abs() / IQ_TEMPERATURE).exp(),
        bc: (-(bc_raw - mu_bc).abs() / BC_TEMPERATURE).exp(),
        degenerate,
    })
}

fn gaussian_fit(x: &[Vec<f64>], dim: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let mut mu = vec![0.0; dim];
    for row in x {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    if n >= 2 {
        for row in x {
            for r in 0..dim {
                for s in 0..dim {
                    cov[(r, s)] += (row[r] - mu[r]) * (row[s] - mu[s]);
                }
            }
        }
        cov /= (n - 1) as f64;
    }
    (mu, cov)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets.
pub fn structural_fid(gen: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if gen.is_empty() || reference.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let dim = gen[0].len();
    for row in gen.iter().chain(reference) {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("structural features"));
        }
    }
    let (mg, sg) = gaussian_fit(gen, dim);
    let (mr, sr) = gaussian_fit(reference, dim);
    let ridge = DMatrix::<f64>::identity(dim, dim) * FID_RIDGE;
    let (sg, sr) = (sg + &ridge, sr + &ridge);
    // Tr((A^½ B A^½)^½) is the same for both orders; averaging them keeps
    // near-null eigenvalue round-off from breaking symmetry.
    let cross = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let root = sqrt_psd(a);
        sqrt_psd(&(&root * b * &root)).trace()
    };
    let inner = 0.5 * (cross(&sg, &sr) + cross(&sr, &sg));
    let mean_term: f64 = mg.iter().zip(&mr).map(|(a, b)| (a - b).powi(2)).sum();
    let trace = sg.trace() + sr.trace() - 2.0 * inner;
    Ok((mean_term + trace).max(0.0))
}

pub fn features_matrix(stats: &[AssemblyStats]) -> Vec<Vec<f64>> {
    stats.iter().map(|s| s.features.0.to_vec()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub win_rate: f64,
    pub n: usize,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over objects; single-threaded so the seed fixes the result.
pub fn paired_bootstrap(improvements: &[f64], resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    if improvements.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs at least one object".into()));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    if improvements.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("improvements"));
    }
    let n = improvements.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| improvements[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        mean: improvements.iter().sum::<f64>() / n as f64,
        ci_low: quantile(&means, 0.025),
        ci_high: quantile(&means, 0.975),
        win_rate: improvements.iter().filter(|&&v| v > 0.0).count() as f64 / n as f64,
        n,
    })
}
