//! Two-stream finite scalar quantization of chart features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const LEVELS: usize = 7;
pub const GEO_SLOTS: usize = 6;
pub const BND_SLOTS: usize = 4;
pub const GEO_CODEBOOK: usize = 117_649;
pub const BND_CODEBOOK: usize = 2_401;

/// Local points with norm at least this are boundary points.
pub const BOUNDARY_RADIUS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenPair {
    pub geo: [u8; GEO_SLOTS],
    pub bnd: [u8; BND_SLOTS],
    pub geo_index: u32,
    pub bnd_index: u32,
}

impl TokenPair {
    pub fn from_levels(geo: [u8; GEO_SLOTS], bnd: [u8; BND_SLOTS]) -> Self {
        TokenPair {
            geo,
            bnd,
            geo_index: pack(&geo, LEVELS).expect("levels in range") as u32,
            bnd_index: pack(&bnd, LEVELS).expect("levels in range") as u32,
        }
    }

    pub fn geo_values(&self) -> [f64; GEO_SLOTS] {
        self.geo.map(|l| level_value(l as usize, LEVELS))
    }

    pub fn bnd_values(&self) -> [f64; BND_SLOTS] {
        self.bnd.map(|l| level_value(l as usize, LEVELS))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeStats {
    pub perplexity: f64,
    pub utilization: f64,
}

/// Grid value of `level` on the uniform `levels`-point grid over [-1, 1].
pub fn level_value(level: usize, levels: usize) -> f64 {
    -1.0 + 2.0 * level as f64 / (levels - 1) as f64
}

/// Clamps to [-1, 1] and snaps to the nearest grid value, exact midpoints
/// going to the lower level.
pub fn fsq_quantize(feature: &[f64], slots: usize, levels: usize) -> Result<(Vec<u8>, Vec<f64>)> {
    if feature.len() != slots {
        return Err(Error::DimensionMismatch {
            expected: slots,
            got: feature.len(),
        });
    }
    if !(2..=256).contains(&levels) {
        return Err(Error::InvalidArgument(format!("levels {levels} out of range")));
    }
    if feature.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("feature"));
    }
    let top = (levels - 1) as f64;
    let mut codes = Vec::with_capacity(slots);
    let mut values = Vec::with_capacity(slots);
    for &x in feature {
        let t = (x.clamp(-1.0, 1.0) + 1.0) * 0.5 * top;
        let l = (t - 0.5).ceil().clamp(0.0, top) as usize;
        codes.push(l as u8);
        values.push(level_value(l, levels));
    }
    Ok((codes, values))
}

/// Mixed-radix packing, first slot most significant.
pub fn pack(levels_per_slot: &[u8], levels: usize) -> Result<usize> {
    let mut idx = 0usize;
    for &l in levels_per_slot {
        if l as usize >= levels {
            return Err(Error::InvalidArgument(format!("level {l} ≥ {levels}")));
        }
        idx = idx * levels + l as usize;
    }
    Ok(idx)
}

pub fn unpack(mut index: usize, slots: usize, levels: usize) -> Result<Vec<u8>> {
    let mut out = vec![0u8; slots];
    for s in (0..slots).rev() {
        out[s] = (index % levels) as u8;
        index /= levels;
    }
    if index != 0 {
        return Err(Error::InvalidArgument("index exceeds code space".into()));
    }
    Ok(out)
}

pub fn code_stats(codes: &[usize], codebook_size: usize) -> Result<CodeStats> {
    if codes.is_empty() {
        return Err(Error::InvalidArgument("empty code multiset".into()));
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &c in codes {
        *counts.entry(c).or_default() += 1;
    }
    let n = codes.len() as f64;
    let mut sorted: Vec<usize> = counts.values().copied().collect();
    sorted.sort_unstable();
    let entropy: f64 = sorted
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok(CodeStats {
        perplexity: entropy.exp().max(1.0),
        utilization: counts.len() as f64 / codebook_size as f64,
    })
}

/// Deterministic chart → (geometry, boundary) feature map, components in [-1, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct Featurizer;

impl Featurizer {
    pub fn features(&self, chart: &Chart) -> ([f64; GEO_SLOTS], [f64; BND_SLOTS]) {
        features_of(&chart.local_points, &chart.local_normals)
    }

    pub fn tokenize(&self, chart: &Chart) -> TokenPair {
        let (g, b) = self.features(chart);
        let (gc, _) = fsq_quantize(&g, GEO_SLOTS, LEVELS).expect("fixed shape");
        let (bc, _) = fsq_quantize(&b, BND_SLOTS, LEVELS).expect("fixed shape");
        TokenPair::from_levels(gc.try_into().unwrap(), bc.try_into().unwrap())
    }
}

fn squash_unit(v: f64) -> f64 {
    (2.0 * v - 1.0).clamp(-1.0, 1.0)
}

pub fn features_of(local: &[Vec3], normals: &[Vec3]) -> ([f64; GEO_SLOTS], [f64; BND_SLOTS]) {
    let n = local.len().max(1) as f64;
    let mut m2 = Vec3::ZERO;
    let mut absz = 0.0;
    for q in local {
        m2 += Vec3::new(q.x * q.x, q.y * q.y, q.z * q.z);
        absz += q.z.abs();
    }
    m2 = m2 / n;
    let nm = if normals.is_empty() {
        Vec3::ZERO
    } else {
        normals.iter().fold(Vec3::ZERO, |a, b| a + *b) / normals.len() as f64
    };
    let geo = [
        squash_unit(m2.x),
        squash_unit(m2.y),
        squash_unit(m2.z),
        nm.x.clamp(-1.0, 1.0),
        nm.y.clamp(-1.0, 1.0),
        squash_unit(absz / n),
    ];

    let boundary: Vec<&Vec3> = local.iter().filter(|q| q.norm() >= BOUNDARY_RADIUS).collect();
    let frac = boundary.len() as f64 / n;
    let (mut cx, mut cy) = (0.0, 0.0);
    for q in &boundary {
        cx += q.x;
        cy += q.y;
    }
    let angle = cy.atan2(cx);
    let aniso = if boundary.len() < 2 {
        0.0
    } else {
        let k = boundary.len() as f64;
        let (mx, my) = (cx / k, cy / k);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for q in &boundary {
            let (dx, dy) = (q.x - mx, q.y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let tr = sxx + syy;
        if tr <= 0.0 {
            0.0
        } else {
            ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt() / tr
        }
    };
    let bnd = [squash_unit(frac), angle.sin(), angle.cos(), squash_unit(aniso)];
    (geo, bnd)
}

/// Tokenizes every chart in place.
pub fn tokenize_charts(charts: &mut [Chart]) {
    let f = Featurizer;
    for c in charts {
        c.token = Some(f.tokenize(c));
    }
}
