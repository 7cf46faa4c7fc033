//! Seam discrimination metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSeam {
    pub source: usize,
    pub score: f64,
    pub p_collision: f64,
    pub valid: bool,
    pub collision: bool,
}

/// `None` marks a metric undefined on a single-class label set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamMetrics {
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub brier: f64,
    pub top1_precision: f64,
    pub top3_recall: f64,
}

/// Rank-statistic AUC with tied scores sharing their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && scores[order[e + 1]] == scores[order[k]] {
            e += 1;
        }
        // Ranks k+1 ..= e+1 averaged.
        let avg = (k + e + 2) as f64 / 2.0;
        for &i in &order[k..=e] {
            if labels[i] {
                rank_sum += avg;
            }
        }
        k = e + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Average precision: mean of precision at each positive, scores descending,
/// ties broken by position.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

pub fn brier(p: &[f64], y: &[bool]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(y)
        .map(|(p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum();
    s / p.len().max(1) as f64
}

pub fn seam_metrics(items: &[ScoredSeam]) -> Result<SeamMetrics> {
    if items.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let scores: Vec<f64> = items.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = items.iter().map(|s| s.valid).collect();
    let pc: Vec<f64> = items.iter().map(|s| s.p_collision).collect();
    let yc: Vec<bool> = items.iter().map(|s| s.collision).collect();

    let mut by_source: BTreeMap<usize, Vec<&ScoredSeam>> = BTreeMap::new();
    for s in items {
        by_source.entry(s.source).or_default().push(s);
    }
    let (mut p1, mut n1, mut r3, mut n3) = (0.0, 0usize, 0.0, 0usize);
    for group in by_source.values_mut() {
        group.sort_by(|a, b| b.score.total_cmp(&a.score));
        n1 += 1;
        if group[0].valid {
            p1 += 1.0;
        }
        let total = group.iter().filter(|s| s.valid).count();
        if total > 0 {
            n3 += 1;
            r3 += group.iter().take(3).filter(|s| s.valid).count() as f64 / total as f64;
        }
    }
    Ok(SeamMetrics {
        auc: auc(&scores, &labels),
        ap: average_precision(&scores, &labels),
        brier: brier(&pc, &yc),
        top1_precision: p1 / n1.max(1) as f64,
        top3_recall: if n3 == 0 { 0.0 } else { r3 / n3 as f64 },
    })
}
