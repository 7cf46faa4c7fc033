//! Two-layer seam head with four output heads and hand-derived gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NEGATIVE_COMPAT, POSE_REFINE_COMPAT, POSITIVE_COMPAT, SEPARATION_MARGIN};
use crate::error::{Error, Result};

/// Output layout: compat logit, 7 pose values, collision logit, invalid logit.
pub const OUTPUTS: usize = 10;
const POSE: std::ops::Range<usize> = 1..8;
const COLL: usize = 8;
const INV: usize = 9;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `BCE(σ(o), y)` evaluated stably from the logit.
fn bce_logit(o: f64, y: f64) -> f64 {
    o.max(0.0) - o * y + (-o.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamPrediction {
    pub compat: f64,
    pub pose: [f64; 7],
    pub p_collision: f64,
    pub p_invalid: f64,
}

/// `out = W2 tanh(W1 x̂ + b1) + b2` with `x̂ = (x − μ) / σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamHead {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl SeamHead {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        SeamHead {
            input,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; OUTPUTS * hidden],
            b2: vec![0.0; OUTPUTS],
            mean: vec![0.0; input],
            scale: vec![1.0; input],
        }
    }

    /// Uniform Glorot initialization.
    pub fn seeded(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = SeamHead::zeros(input, hidden);
        let a1 = (6.0 / (input + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + OUTPUTS) as f64).sqrt();
        h.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        h.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        h
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// Sets the input standardization from a sample batch.
    pub fn fit_standardization(&mut self, xs: &[Vec<f64>]) {
        let n = xs.len().max(1) as f64;
        for k in 0..self.input {
            let m = xs.iter().map(|x| x[k]).sum::<f64>() / n;
            let v = xs.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n;
            self.mean[k] = m;
            self.scale[k] = if v > 1e-12 { v.sqrt() } else { 1.0 };
        }
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Hidden activations and raw outputs.
    fn raw(&self, xs: &[f64]) -> (Vec<f64>, [f64; OUTPUTS]) {
        let mut a = vec![0.0; self.hidden];
        for (h, ah) in a.iter_mut().enumerate() {
            let row = &self.w1[h * self.input..(h + 1) * self.input];
            let z: f64 = row.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() + self.b1[h];
            *ah = z.tanh();
        }
        let mut o = [0.0; OUTPUTS];
        for (k, ok) in o.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            *ok = row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + self.b2[k];
        }
        (a, o)
    }

    pub fn forward_input(&self, x: &[f64]) -> Result<SeamPrediction> {
        if x.len() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                got: x.len(),
            });
        }
        let (_, o) = self.raw(&self.standardize(x));
        let mut pose = [0.0; 7];
        pose.copy_from_slice(&o[POSE]);
        Ok(SeamPrediction {
            compat: sigmoid(o[0]),
            pose,
            p_collision: sigmoid(o[COLL]),
            p_invalid: sigmoid(o[INV]),
        })
    }

    /// `SeamHead(h_i, h_j, ΔT, s_i/s_j)`; `pose_features` carries ΔT and the log ratio.
    pub fn forward(&self, h_i: &[f64], h_j: &[f64], pose_features: &[f64]) -> Result<SeamPrediction> {
        self.forward_input(&seam_input(h_i, h_j, pose_features))
    }
}

pub fn seam_input(h_i: &[f64], h_j: &[f64], pose_features: &[f64]) -> Vec<f64> {
    [h_i, h_j, pose_features].concat()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamSample {
    pub x: Vec<f64>,
    pub target: f64,
    pub pose_target: [f64; 7],
    pub collision: bool,
    pub invalid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub compat: f64,
    pub pose: f64,
    pub collision: f64,
    pub separation: f64,
    pub invalid: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            compat: 1.0,
            pose: 0.05,
            collision: 0.05,
            separation: 0.05,
            invalid: 0.05,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        compat: 0.0,
        pose: 0.0,
        collision: 0.0,
        separation: 0.0,
        invalid: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub max_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            lr: 0.5,
            epochs: 1500,
            weights: LossWeights::default(),
            seed: 7,
            max_samples: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub trace: Vec<f64>,
}

/// Batch loss and its gradient with respect to [`SeamHead::params`].
pub fn loss_and_grad(head: &SeamHead, batch: &[SeamSample], w: &LossWeights) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let n_pose = batch
        .iter()
        .filter(|s| s.target >= POSE_REFINE_COMPAT)
        .count()
        .max(1) as f64;
    let pos: Vec<bool> = batch.iter().map(|s| s.target >= POSITIVE_COMPAT).collect();
    let neg: Vec<bool> = batch.iter().map(|s| s.target <= NEGATIVE_COMPAT).collect();
    let n_pos = pos.iter().filter(|&&b| b).count();
    let n_neg = neg.iter().filter(|&&b| b).count();

    let xs: Vec<Vec<f64>> = batch.iter().map(|s| head.standardize(&s.x)).collect();
    let fwd: Vec<(Vec<f64>, [f64; OUTPUTS])> = xs.iter().map(|x| head.raw(x)).collect();
    let compat: Vec<f64> = fwd.iter().map(|(_, o)| sigmoid(o[0])).collect();

    let mut loss = 0.0;
    let mut g_out: Vec<[f64; OUTPUTS]> = vec![[0.0; OUTPUTS]; batch.len()];
    for (k, s) in batch.iter().enumerate() {
        let o = &fwd[k].1;
        let c = compat[k];
        let dc = c * (1.0 - c);
        loss += w.compat * (c - s.target).powi(2) / n;
        g_out[k][0] += w.compat * 2.0 * (c - s.target) / n * dc;
        if s.target >= POSE_REFINE_COMPAT {
            for (p, idx) in POSE.enumerate() {
                let r = o[idx] - s.pose_target[p];
                loss += w.pose * r * r / (7.0 * n_pose);
                g_out[k][idx] += w.pose * 2.0 * r / (7.0 * n_pose);
            }
        }
        let y = if s.collision { 1.0 } else { 0.0 };
        loss += w.collision * bce_logit(o[COLL], y) / n;
        g_out[k][COLL] += w.collision * (sigmoid(o[COLL]) - y) / n;
        let y = if s.invalid { 1.0 } else { 0.0 };
        loss += w.invalid * bce_logit(o[INV], y) / n;
        g_out[k][INV] += w.invalid * (sigmoid(o[INV]) - y) / n;
    }
    if n_pos > 0 && n_neg > 0 && w.separation != 0.0 {
        let mp = (0..batch.len()).filter(|&k| pos[k]).map(|k| compat[k]).sum::<f64>() / n_pos as f64;
        let mn = (0..batch.len()).filter(|&k| neg[k]).map(|k| compat[k]).sum::<f64>() / n_neg as f64;
        let hinge = SEPARATION_MARGIN - (mp - mn);
        if hinge > 0.0 {
            loss += w.separation * hinge;
            for k in 0..batch.len() {
                let dc = compat[k] * (1.0 - compat[k]);
                if pos[k] {
                    g_out[k][0] -= w.separation * dc / n_pos as f64;
                }
                if neg[k] {
                    g_out[k][0] += w.separation * dc / n_neg as f64;
                }
            }
        }
    }

    let (hd, inp) = (head.hidden, head.input);
    let mut gw1 = vec![0.0; hd * inp];
    let mut gb1 = vec![0.0; hd];
    let mut gw2 = vec![0.0; OUTPUTS * hd];
    let mut gb2 = vec![0.0; OUTPUTS];
    for (k, go) in g_out.iter().enumerate() {
        let a = &fwd[k].0;
        let mut ga = vec![0.0; hd];
        for (o, &g) in go.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            gb2[o] += g;
            for h in 0..hd {
                gw2[o * hd + h] += g * a[h];
                ga[h] += g * head.w2[o * hd + h];
            }
        }
        for h in 0..hd {
            let gz = ga[h] * (1.0 - a[h] * a[h]);
            if gz == 0.0 {
                continue;
            }
            gb1[h] += gz;
            let row = &mut gw1[h * inp..(h + 1) * inp];
            for (r, x) in row.iter_mut().zip(&xs[k]) {
                *r += gz * x;
            }
        }
    }
    (loss, [gw1, gb1, gw2, gb2].concat())
}

pub fn batch_loss(head: &SeamHead, batch: &[SeamSample], w: &LossWeights) -> f64 {
    loss_and_grad(head, batch, w).0
}

/// Seeded subsample of at most `max` items, in original order.
pub fn subsample<T: Clone>(items: &[T], max: usize, seed: u64) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx.truncate(max);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Full-batch gradient descent on the weighted multi-head loss.
pub fn train_seam_head(head: &mut SeamHead, samples: &[SeamSample], cfg: &TrainConfig) -> Result<TrainReport> {
    let has_pos = samples.iter().any(|s| s.target >= POSITIVE_COMPAT);
    let has_neg = samples.iter().any(|s| s.target <= NEGATIVE_COMPAT);
    if !has_pos || !has_neg {
        return Err(Error::UnbalancedBank);
    }
    let batch = subsample(samples, cfg.max_samples, cfg.seed);
    let mut params = head.params();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (l, g) = loss_and_grad(head, &batch, &cfg.weights);
        trace.push(l);
        for (p, gi) in params.iter_mut().zip(&g) {
            *p -= cfg.lr * gi;
        }
        head.set_params(&params);
    }
    let final_loss = batch_loss(head, &batch, &cfg.weights);
    trace.push(final_loss);
    log::debug!("seam head: loss {:.5} -> {:.5}", trace[0], final_loss);
    Ok(TrainReport {
        initial_loss: trace[0],
        final_loss,
        trace,
    })
}
