//! Latent repair: detached-child tasks, scorer rankings and their metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ChartSupports, SeamCandidate};
use crate::chart::Chart;
use crate::error::{Error, Result};

/// Policy blend `S_repair = s̃_ψ + 0.5 s̃_dist − 0.5 p̃_coll − 0.5 p̃_inv`.
pub const POLICY_SEAM: f64 = 1.0;
pub const POLICY_DIST: f64 = 0.5;
pub const POLICY_COLL: f64 = -0.5;
pub const POLICY_INV: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairMode {
    EdgeBank,
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scorer {
    Nn,
    DenseSupport,
    SeamHead,
    Policy,
}

impl Scorer {
    pub const ALL: [Scorer; 4] = [Scorer::Nn, Scorer::DenseSupport, Scorer::SeamHead, Scorer::Policy];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Nn => "nn",
            Scorer::DenseSupport => "dense-support",
            Scorer::SeamHead => "seam-head",
            Scorer::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairTask {
    pub child: usize,
    /// Candidate parent chart ids, ascending.
    pub candidates: Vec<usize>,
    /// Support distance from the child to each candidate.
    pub distances: Vec<f64>,
    pub valid: BTreeSet<usize>,
    pub reference: usize,
    pub hard: bool,
    pub heuristic_fail: bool,
}

impl RepairTask {
    pub fn nn_scores(&self) -> Vec<f64> {
        self.distances.iter().map(|d| -d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub ranking: Vec<usize>,
    /// 1-based rank of the first valid parent.
    pub first_valid: Option<usize>,
    /// 1-based rank of the reference parent.
    pub reference_rank: Option<usize>,
}

impl RankOutcome {
    pub fn valid_at(&self, k: usize) -> f64 {
        f64::from(self.first_valid.is_some_and(|r| r <= k))
    }

    pub fn parent_at(&self, k: usize) -> f64 {
        f64::from(self.reference_rank.is_some_and(|r| r <= k))
    }

    pub fn valid_rr(&self) -> f64 {
        self.first_valid.map_or(0.0, |r| 1.0 / r as f64)
    }

    pub fn parent_rr(&self) -> f64 {
        self.reference_rank.map_or(0.0, |r| 1.0 / r as f64)
    }
}

/// Candidate positions sorted by score descending, ties by chart id.
fn order_by_score(ids: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order
}

/// Ranks the task's candidates by `scores` (aligned with `task.candidates`).
pub fn repair_rank(task: &RepairTask, scores: &[f64]) -> Result<RankOutcome> {
    if task.candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if scores.len() != task.candidates.len() {
        return Err(Error::DimensionMismatch {
            expected: task.candidates.len(),
            got: scores.len(),
        });
    }
    let ranking: Vec<usize> = order_by_score(&task.candidates, scores)
        .into_iter()
        .map(|p| task.candidates[p])
        .collect();
    let first_valid = ranking.iter().position(|c| task.valid.contains(c)).map(|p| p + 1);
    let reference_rank = ranking.iter().position(|&c| c == task.reference).map(|p| p + 1);
    Ok(RankOutcome {
        ranking,
        first_valid,
        reference_rank,
    })
}

/// Min–max normalization; a constant vector maps to zeros.
pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Per-task policy blend over normalized terms.
pub fn policy_scores(seam: &[f64], dist_score: &[f64], p_coll: &[f64], p_inv: &[f64]) -> Vec<f64> {
    let (a, b, c, d) = (min_max(seam), min_max(dist_score), min_max(p_coll), min_max(p_inv));
    (0..seam.len())
        .map(|k| POLICY_SEAM * a[k] + POLICY_DIST * b[k] + POLICY_COLL * c[k] + POLICY_INV * d[k])
        .collect()
}

/// Tags a task from its distances: `hard` when some invalid candidate scores
/// strictly above every valid one, `heuristic_fail` when the NN top-1 is invalid.
fn tag(task: &mut RepairTask) {
    let s = task.nn_scores();
    let best_valid = (0..s.len())
        .filter(|&k| task.valid.contains(&task.candidates[k]))
        .map(|k| s[k])
        .fold(f64::NEG_INFINITY, f64::max);
    task.hard = (0..s.len())
        .any(|k| !task.valid.contains(&task.candidates[k]) && s[k] > best_valid);
    let top = task.candidates[order_by_score(&task.candidates, &s)[0]];
    task.heuristic_fail = !task.valid.contains(&top);
}

/// One task per valid cross-partition edge `(child → parent)`. `is_parent(c, p)`
/// orients an edge between the charts' owners; `order` is the serialization
/// position of every chart (used in prefix mode).
#[allow(clippy::too_many_arguments)]
pub fn build_repair_bank(
    charts: &[Chart],
    supports: &ChartSupports,
    cands: &[SeamCandidate],
    mode: RepairMode,
    pool_radius: f64,
    order: &[usize],
    is_parent: impl Fn(&Chart, &Chart) -> bool,
) -> Vec<RepairTask> {
    let mut valid_of: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for c in cands.iter().filter(|c| c.valid && c.cross_partition) {
        valid_of.entry(c.source).or_default().insert(c.dest);
    }
    let radii = supports.radii(charts);
    let mut tasks = Vec::new();
    let mut pools: BTreeMap<usize, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for c in cands.iter().filter(|c| c.valid && c.cross_partition) {
        let (child, parent) = (&charts[c.source], &charts[c.dest]);
        if !is_parent(child, parent) {
            continue;
        }
        if mode == RepairMode::Prefix && order[parent.id] >= order[child.id] {
            continue;
        }
        let valid_all = &valid_of[&child.id];
        let (ids, dists) = pools
            .entry(child.id)
            .or_insert_with(|| {
                let mut ids = Vec::new();
                let mut dists = Vec::new();
                for k in charts {
                    if k.partition == child.partition {
                        continue;
                    }
                    let is_valid = valid_all.contains(&k.id);
                    let bound = child.anchor.dist(k.anchor) - radii[child.id] - radii[k.id];
                    if bound > pool_radius && !is_valid {
                        continue;
                    }
                    let d = supports.distance(child.id, k.id);
                    if d <= pool_radius || is_valid {
                        ids.push(k.id);
                        dists.push(d);
                    }
                }
                (ids, dists)
            })
            .clone();
        let (ids, dists): (Vec<usize>, Vec<f64>) = ids
            .into_iter()
            .zip(dists)
            .filter(|(k, _)| mode == RepairMode::EdgeBank || order[*k] < order[child.id])
            .unzip();
        let valid: BTreeSet<usize> = ids.iter().copied().filter(|k| valid_all.contains(k)).collect();
        let mut task = RepairTask {
            child: child.id,
            candidates: ids,
            distances: dists,
            valid,
            reference: parent.id,
            hard: false,
            heuristic_fail: false,
        };
        tag(&mut task);
        tasks.push(task);
    }
    tasks
}
