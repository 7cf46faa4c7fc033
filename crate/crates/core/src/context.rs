//! Per-chart token features and pair-biased multi-head attention with a
//! hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const POS_FREQS: usize = 4;
pub const PART_EMBED: usize = 8;
/// Geo (6) + bnd (4) + pose residual (6) + log scale (1) + position + partition.
pub const RAW_DIM: usize = 6 + 4 + 6 + 1 + 3 * 2 * POS_FREQS + PART_EMBED;
pub const GEOM_HIDDEN: usize = 64;
pub const GEOM_INPUT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub seed: u64,
    pub bias_same: f64,
    pub bias_cross: f64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            dim: 64,
            heads: 4,
            layers: 2,
            seed: 17,
            bias_same: 0.5,
            bias_cross: -0.5,
        }
    }
}

impl ContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "context dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// `b_geom = W2 tanh(W1 u + b1) + b2`, one output per head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryBias {
    pub heads: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl GeometryBias {
    pub fn zeros(heads: usize) -> Self {
        GeometryBias {
            heads,
            w1: vec![0.0; GEOM_HIDDEN * GEOM_INPUT],
            b1: vec![0.0; GEOM_HIDDEN],
            w2: vec![0.0; heads * GEOM_HIDDEN],
            b2: vec![0.0; heads],
        }
    }

    fn seeded(heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut g = GeometryBias::zeros(heads);
        g.w1.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        g.b1.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
        let a = 0.3 / (GEOM_HIDDEN as f64).sqrt();
        g.w2.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        g
    }

    fn hidden(&self, u: &[f64; GEOM_INPUT]) -> [f64; GEOM_HIDDEN] {
        let mut a = [0.0; GEOM_HIDDEN];
        for (k, ak) in a.iter_mut().enumerate() {
            let row = &self.w1[k * GEOM_INPUT..(k + 1) * GEOM_INPUT];
            *ak = (row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + self.b1[k]).tanh();
        }
        a
    }

    /// `W1 u(i, j) = proj[j] - proj[i]`, since `u` is a difference of per-token terms.
    fn project(&self, m: &TokenMeta) -> [f64; GEOM_HIDDEN] {
        let t = [0.5 * m.anchor.x, 0.5 * m.anchor.y, 0.5 * m.anchor.z, -m.scale.ln()];
        let mut a = [0.0; GEOM_HIDDEN];
        for (k, ak) in a.iter_mut().enumerate() {
            let row = &self.w1[k * GEOM_INPUT..(k + 1) * GEOM_INPUT];
            *ak = row.iter().zip(&t).map(|(w, x)| w * x).sum::<f64>();
        }
        a
    }

    fn output(&self, a: &[f64; GEOM_HIDDEN], head: usize) -> f64 {
        let row = &self.w2[head * GEOM_HIDDEN..(head + 1) * GEOM_HIDDEN];
        row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + self.b2[head]
    }

    fn is_zero(&self) -> bool {
        self.w2.iter().chain(&self.b2).all(|&w| w == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionLayer {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub geom: GeometryBias,
}

impl AttentionLayer {
    fn seeded(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (3.0 / dim as f64).sqrt();
        let mut mat = |scale: f64| -> Vec<f64> { (0..dim * dim).map(|_| scale * rng.random_range(-a..a)).collect() };
        let wq = mat(1.0);
        let wk = mat(1.0);
        let wv = mat(0.5);
        AttentionLayer {
            wq,
            wk,
            wv,
            geom: GeometryBias::seeded(heads, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        3 * self.wq.len() + self.geom.w1.len() + self.geom.b1.len() + self.geom.w2.len() + self.geom.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [
            &self.wq[..],
            &self.wk,
            &self.wv,
            &self.geom.w1,
            &self.geom.b1,
            &self.geom.w2,
            &self.geom.b2,
        ]
        .concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut rest = p;
        for dst in [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.geom.w1,
            &mut self.geom.b1,
            &mut self.geom.w2,
            &mut self.geom.b2,
        ] {
            let (a, b) = rest.split_at(dst.len());
            dst.copy_from_slice(a);
            rest = b;
        }
        assert!(rest.is_empty());
    }
}

/// Per-token geometric metadata consumed by the attention biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenMeta {
    pub partition: usize,
    pub anchor: Vec3,
    pub scale: f64,
}

impl TokenMeta {
    pub fn of(chart: &Chart) -> Self {
        TokenMeta {
            partition: chart.partition,
            anchor: chart.anchor,
            scale: chart.scale,
        }
    }
}

fn pair_input(mi: &TokenMeta, mj: &TokenMeta) -> [f64; GEOM_INPUT] {
    let d = (mj.anchor - mi.anchor) * 0.5;
    [d.x, d.y, d.z, (mi.scale / mj.scale).ln()]
}

fn matvec(m: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Intermediate values of one attention layer.
pub struct LayerTrace {
    pub q: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `alpha[h][i][j]`.
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub out: Vec<Vec<f64>>,
}

/// `α_ij = softmax_j(q_i·k_j/√d_h + b_part(i, j) + b_geom(i, j))`;
/// `out_i = x_i + concat_h Σ_j α_ij v_j`.
pub fn attention_layer(
    layer: &AttentionLayer,
    bias: (f64, f64),
    x: &[Vec<f64>],
    meta: &[TokenMeta],
    heads: usize,
) -> LayerTrace {
    let n = x.len();
    let d = x[0].len();
    let dh = d / heads;
    let inv = 1.0 / (dh as f64).sqrt();
    let q: Vec<Vec<f64>> = x.iter().map(|xi| matvec(&layer.wq, xi, d)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|xi| matvec(&layer.wk, xi, d)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|xi| matvec(&layer.wv, xi, d)).collect();
    let mut alpha = vec![vec![vec![0.0; n]; n]; heads];
    let use_geom = !layer.geom.is_zero();
    let mut logits = vec![0.0; n];
    // tanh(p_j - p_i + b) = 1 - 2 / (e^{2 p_j} e^{2 (b - p_i)} + 1); exponents
    // are clamped so the product stays finite.
    let ex = |z: f64| (2.0 * z).clamp(-300.0, 300.0).exp();
    let (ej, fi): (Vec<[f64; GEOM_HIDDEN]>, Vec<[f64; GEOM_HIDDEN]>) = if use_geom {
        meta.iter()
            .map(|m| {
                let p = layer.geom.project(m);
                let mut e = [0.0; GEOM_HIDDEN];
                let mut f = [0.0; GEOM_HIDDEN];
                for k in 0..GEOM_HIDDEN {
                    e[k] = ex(p[k]);
                    f[k] = ex(layer.geom.b1[k] - p[k]);
                }
                (e, f)
            })
            .unzip()
    } else {
        (Vec::new(), Vec::new())
    };
    let mut bg = vec![vec![0.0; n]; heads];
    for i in 0..n {
        if use_geom {
            let g = &layer.geom;
            for j in 0..n {
                let mut a = [0.0; GEOM_HIDDEN];
                for m in 0..GEOM_HIDDEN {
                    a[m] = 1.0 - 2.0 / (ej[j][m] * fi[i][m] + 1.0);
                }
                for (h, bh) in bg.iter_mut().enumerate() {
                    bh[j] = g.output(&a, h);
                }
            }
        }
        for (h, ah) in alpha.iter_mut().enumerate() {
            let r = h * dh..(h + 1) * dh;
            for j in 0..n {
                let dot: f64 = q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum();
                let bp = if meta[i].partition == meta[j].partition { bias.0 } else { bias.1 };
                logits[j] = dot * inv + bp + bg[h][j];
            }
            softmax_into(&logits, &mut ah[i]);
        }
    }
    let mut out = x.to_vec();
    for i in 0..n {
        for (h, ah) in alpha.iter().enumerate() {
            for j in 0..n {
                let w = ah[i][j];
                if w == 0.0 {
                    continue;
                }
                for c in h * dh..(h + 1) * dh {
                    out[i][c] += w * v[j][c];
                }
            }
        }
    }
    LayerTrace { q, k, v, alpha, out }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Gradients of one attention layer.
pub struct LayerGrad {
    pub layer: Vec<f64>,
    pub bias_same: f64,
    pub bias_cross: f64,
    pub input: Vec<Vec<f64>>,
}

/// Backpropagates `g_out = ∂L/∂out` through [`attention_layer`].
pub fn attention_backward(
    layer: &AttentionLayer,
    x: &[Vec<f64>],
    meta: &[TokenMeta],
    heads: usize,
    trace: &LayerTrace,
    g_out: &[Vec<f64>],
) -> LayerGrad {
    let n = x.len();
    let d = x[0].len();
    let dh = d / heads;
    let inv = 1.0 / (dh as f64).sqrt();
    let mut gq = vec![vec![0.0; d]; n];
    let mut gk = vec![vec![0.0; d]; n];
    let mut gv = vec![vec![0.0; d]; n];
    let mut gx = g_out.to_vec();
    let (mut g_same, mut g_cross) = (0.0, 0.0);
    let g = &layer.geom;
    let mut gw1 = vec![0.0; g.w1.len()];
    let mut gb1 = vec![0.0; g.b1.len()];
    let mut gw2 = vec![0.0; g.w2.len()];
    let mut gb2 = vec![0.0; g.b2.len()];
    let mut dlogit = vec![vec![0.0; n]; heads];
    for i in 0..n {
        for h in 0..heads {
            let r = h * dh..(h + 1) * dh;
            let a = &trace.alpha[h][i];
            let mut da = vec![0.0; n];
            for j in 0..n {
                da[j] = g_out[i][r.clone()].iter().zip(&trace.v[j][r.clone()]).map(|(p, q)| p * q).sum();
                for c in r.clone() {
                    gv[j][c] += a[j] * g_out[i][c];
                }
            }
            let mean: f64 = a.iter().zip(&da).map(|(p, q)| p * q).sum();
            for j in 0..n {
                let dl = a[j] * (da[j] - mean);
                dlogit[h][j] = dl;
                for c in r.clone() {
                    gq[i][c] += dl * trace.k[j][c] * inv;
                    gk[j][c] += dl * trace.q[i][c] * inv;
                }
                if meta[i].partition == meta[j].partition {
                    g_same += dl;
                } else {
                    g_cross += dl;
                }
            }
        }
        for j in 0..n {
            let u = pair_input(&meta[i], &meta[j]);
            let a = g.hidden(&u);
            let mut ga = [0.0; GEOM_HIDDEN];
            for h in 0..heads {
                let dl = dlogit[h][j];
                gb2[h] += dl;
                for m in 0..GEOM_HIDDEN {
                    gw2[h * GEOM_HIDDEN + m] += dl * a[m];
                    ga[m] += dl * g.w2[h * GEOM_HIDDEN + m];
                }
            }
            for m in 0..GEOM_HIDDEN {
                let dz = ga[m] * (1.0 - a[m] * a[m]);
                gb1[m] += dz;
                for (t, ut) in u.iter().enumerate() {
                    gw1[m * GEOM_INPUT + t] += dz * ut;
                }
            }
        }
    }
    let mut gwq = vec![0.0; d * d];
    let mut gwk = vec![0.0; d * d];
    let mut gwv = vec![0.0; d * d];
    for i in 0..n {
        for r in 0..d {
            for c in 0..d {
                gwq[r * d + c] += gq[i][r] * x[i][c];
                gwk[r * d + c] += gk[i][r] * x[i][c];
                gwv[r * d + c] += gv[i][r] * x[i][c];
                gx[i][c] += layer.wq[r * d + c] * gq[i][r]
                    + layer.wk[r * d + c] * gk[i][r]
                    + layer.wv[r * d + c] * gv[i][r];
            }
        }
    }
    LayerGrad {
        layer: [gwq, gwk, gwv, gw1, gb1, gw2, gb2].concat(),
        bias_same: g_same,
        bias_cross: g_cross,
        input: gx,
    }
}

/// Seeded feature projection plus a stack of attention layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    pub cfg: ContextConfig,
    /// `dim × RAW_DIM`, orthonormal columns.
    pub projection: Vec<f64>,
    pub layers: Vec<AttentionLayer>,
}

fn hash_unit(seed: u64, a: u64, b: u64) -> f64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

impl ContextModel {
    pub fn new(cfg: ContextConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.dim;
        // Gram-Schmidt over RAW_DIM random columns; extra columns past d stay random.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(RAW_DIM);
        for _ in 0..RAW_DIM {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if cols.len() < d {
                for c in &cols {
                    let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        let mut projection = vec![0.0; d * RAW_DIM];
        for (c, col) in cols.iter().enumerate() {
            for r in 0..d {
                projection[r * RAW_DIM + c] = col[r];
            }
        }
        let layers = (0..cfg.layers)
            .map(|_| AttentionLayer::seeded(d, cfg.heads, &mut rng))
            .collect();
        Ok(ContextModel {
            cfg,
            projection,
            layers,
        })
    }

    /// Raw concatenated features before projection.
    pub fn raw_features(&self, chart: &Chart) -> Result<[f64; RAW_DIM]> {
        let tok = chart.token.ok_or(Error::Untokenized(chart.id))?;
        let mut f = [0.0; RAW_DIM];
        let mut k = 0;
        for v in tok.geo_values().into_iter().chain(tok.bnd_values()) {
            f[k] = v;
            k += 1;
        }
        for v in chart.pose_residual {
            f[k] = v;
            k += 1;
        }
        f[k] = chart.scale.ln();
        k += 1;
        for axis in 0..3 {
            for m in 0..POS_FREQS {
                let w = std::f64::consts::PI * (1 << m) as f64;
                f[k] = (w * chart.anchor[axis]).sin();
                f[k + 1] = (w * chart.anchor[axis]).cos();
                k += 2;
            }
        }
        for m in 0..PART_EMBED {
            f[k] = hash_unit(self.cfg.seed, chart.partition as u64, m as u64);
            k += 1;
        }
        debug_assert_eq!(k, RAW_DIM);
        Ok(f)
    }

    pub fn token_features(&self, chart: &Chart) -> Result<Vec<f64>> {
        let raw = self.raw_features(chart)?;
        Ok(matvec(&self.projection, &raw, self.cfg.dim))
    }

    /// Runs every layer; rows of every attention matrix sum to one.
    pub fn forward(&self, tokens: &[Vec<f64>], meta: &[TokenMeta]) -> Result<Vec<Vec<f64>>> {
        if tokens.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if tokens.len() != meta.len() {
            return Err(Error::DimensionMismatch {
                expected: tokens.len(),
                got: meta.len(),
            });
        }
        for t in tokens {
            if t.len() != self.cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.cfg.dim,
                    got: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("token"));
            }
        }
        if meta.iter().any(|m| !m.anchor.is_finite() || !(m.scale > 0.0)) {
            return Err(Error::NonFinite("token metadata"));
        }
        let mut x = tokens.to_vec();
        for layer in &self.layers {
            x = attention_layer(layer, (self.cfg.bias_same, self.cfg.bias_cross), &x, meta, self.cfg.heads).out;
        }
        Ok(x)
    }

    /// Contextualized features for every chart of one object.
    pub fn contextualize(&self, charts: &[Chart]) -> Result<Vec<Vec<f64>>> {
        let tokens = charts
            .iter()
            .map(|c| self.token_features(c))
            .collect::<Result<Vec<_>>>()?;
        let meta: Vec<TokenMeta> = charts.iter().map(TokenMeta::of).collect();
        self.forward(&tokens, &meta)
    }
}

/// Max relative error between `analytic` and central differences of `f`.
pub fn grad_check(f: impl Fn(&[f64]) -> f64, analytic: &[f64], theta: &[f64], h: f64) -> f64 {
    let mut p = theta.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        p[k] = theta[k] + h;
        let fp = f(&p);
        p[k] = theta[k] - h;
        let fm = f(&p);
        p[k] = theta[k];
        let num = (fp - fm) / (2.0 * h);
        let a = analytic[k];
        let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}
