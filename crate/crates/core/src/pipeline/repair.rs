//! Latent-repair benchmark: edge bank per object, seam head trained on a
//! train split of objects, every scorer ranked on the held-out tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{mean, par_map, Report, RunConfig};
use crate::chart::serialization_order;
use crate::context::ContextModel;
use crate::error::{Error, Result};
use crate::ingest::archive::ObjectRecord;
use crate::metrics::paired_bootstrap;
use crate::seam::head::{seam_input, train_seam_head, SeamHead, SeamSample, TrainReport};
use crate::seam::repair::{build_repair_bank, policy_scores, repair_rank, RankOutcome, RepairTask, Scorer};
use crate::seam::{chart_pair_pose_features, chart_pair_terms, ChartSupports, CompatTerms, PENETRATION_LABEL};
use crate::synth::object_seed;

const SPLIT_SALT: u64 = 0x5eed_0517;

/// Everything a scorer may read about one (child, candidate) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInfo {
    pub x: Vec<f64>,
    pub terms: CompatTerms,
    pub pose_target: [f64; 7],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub task: RepairTask,
    pub pairs: Vec<PairInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBench {
    pub id: String,
    pub charts: usize,
    pub tasks: Vec<TaskState>,
}

/// Edge bank of one record with scorer inputs for every pool pair. Without
/// ground truth a cross-partition seam points from the higher partition id
/// to the lower one.
pub fn bench_object(rec: &ObjectRecord, cfg: &RunConfig) -> Result<ObjectBench> {
    let obj = &rec.object;
    let charts = &rec.charts;
    if charts.is_empty() {
        return Err(Error::Data(format!("{}: record has no charts; run preprocess first", obj.id)));
    }
    let supports = ChartSupports::new(obj, charts);
    let mut position = vec![0usize; charts.len()];
    for (p, id) in serialization_order(charts).into_iter().enumerate() {
        position[id] = p;
    }
    let gt = rec.ground_truth.as_ref();
    let tasks = build_repair_bank(charts, &supports, &rec.candidates, cfg.repair.mode, cfg.repair.pool_radius, &position, |c, p| {
        match gt {
            Some(g) => g.parent_of(obj.component_of[c.anchor_point]) == Some(obj.component_of[p.anchor_point]),
            None => c.partition > p.partition,
        }
    });
    if tasks.is_empty() {
        return Ok(ObjectBench {
            id: obj.id.clone(),
            charts: charts.len(),
            tasks: Vec::new(),
        });
    }
    let h = ContextModel::new(cfg.context)?.contextualize(charts)?;
    let pose_targets: BTreeMap<(usize, usize), [f64; 7]> = rec
        .candidates
        .iter()
        .map(|c| ((c.source, c.dest), c.pose_target))
        .collect();
    let mut terms_cache: BTreeMap<(usize, usize), CompatTerms> = BTreeMap::new();
    let mut states = Vec::with_capacity(tasks.len());
    for task in tasks {
        let child = task.child;
        let pairs = task
            .candidates
            .iter()
            .map(|&k| {
                let pose = chart_pair_pose_features(&charts[child], &charts[k]);
                Ok(PairInfo {
                    x: seam_input(&h[child], &h[k], &pose),
                    terms: match terms_cache.get(&(child, k)) {
                        Some(t) => *t,
                        None => {
                            let t = chart_pair_terms(charts, &supports, child, k, &cfg.seam)?;
                            terms_cache.insert((child, k), t);
                            t
                        }
                    },
                    pose_target: pose_targets.get(&(child, k)).copied().unwrap_or([0.0; 7]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        states.push(TaskState { task, pairs });
    }
    Ok(ObjectBench {
        id: obj.id.clone(),
        charts: charts.len(),
        tasks: states,
    })
}

/// Object indices of the training split: the `train_fraction` share with the
/// smallest per-object hash, leaving at least one held-out object when n ≥ 2.
pub fn train_split(n: usize, seed: u64, train_fraction: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (object_seed(seed ^ SPLIT_SALT, i), i));
    let mut k = (train_fraction * n as f64).round() as usize;
    if n >= 2 {
        k = k.clamp(1, n - 1);
    }
    let mut train = vec![false; n];
    for &i in &order[..k.min(n)] {
        train[i] = true;
    }
    train
}

/// Training samples from every pool pair of the given objects, each
/// (child, candidate) pair once.
pub fn training_samples(objects: &[&ObjectBench]) -> Vec<SeamSample> {
    let mut out = Vec::new();
    for ob in objects {
        let mut seen = std::collections::BTreeSet::new();
        for ts in &ob.tasks {
            for (p, &k) in ts.pairs.iter().zip(&ts.task.candidates) {
                if !seen.insert((ts.task.child, k)) {
                    continue;
                }
                out.push(SeamSample {
                    x: p.x.clone(),
                    target: p.terms.blend(),
                    pose_target: p.pose_target,
                    collision: 1.0 - p.terms.q_occ >= PENETRATION_LABEL,
                    invalid: !ts.task.valid.contains(&k),
                });
            }
        }
    }
    out
}

/// Scores of `scorer` for one task, aligned with its candidates.
pub fn scorer_scores(scorer: Scorer, ts: &TaskState, head: &SeamHead) -> Result<Vec<f64>> {
    Ok(match scorer {
        Scorer::Nn => ts.task.nn_scores(),
        Scorer::DenseSupport => ts.pairs.iter().map(|p| p.terms.s_ov).collect(),
        Scorer::SeamHead => ts
            .pairs
            .iter()
            .map(|p| head.forward_input(&p.x).map(|o| o.compat))
            .collect::<Result<_>>()?,
        Scorer::Policy => {
            let preds = ts
                .pairs
                .iter()
                .map(|p| head.forward_input(&p.x))
                .collect::<Result<Vec<_>>>()?;
            let seam: Vec<f64> = preds.iter().map(|o| o.compat).collect();
            let coll: Vec<f64> = preds.iter().map(|o| o.p_collision).collect();
            let inv: Vec<f64> = preds.iter().map(|o| o.p_invalid).collect();
            policy_scores(&seam, &ts.task.nn_scores(), &coll, &inv)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub tasks: usize,
    pub valid_at_1: f64,
    pub valid_at_3: f64,
    pub parent_at_1: f64,
    pub parent_at_3: f64,
    pub valid_mrr: f64,
    pub parent_mrr: f64,
    /// Bootstrap of Valid@1; absent for an empty subset.
    pub valid_at_1_ci: Option<crate::metrics::BootstrapSummary>,
    /// Paired bootstrap of Valid@1 minus the NN scorer's Valid@1.
    pub vs_nn: Option<crate::metrics::BootstrapSummary>,
}

fn summarize(outs: &[&RankOutcome], nn: &[&RankOutcome], resamples: usize, seed: u64) -> Result<SubsetSummary> {
    let m = |f: &dyn Fn(&RankOutcome) -> f64| mean(&outs.iter().map(|o| f(o)).collect::<Vec<_>>());
    let v1: Vec<f64> = outs.iter().map(|o| o.valid_at(1)).collect();
    let diff: Vec<f64> = outs.iter().zip(nn).map(|(o, n)| o.valid_at(1) - n.valid_at(1)).collect();
    let (ci, vs) = if outs.is_empty() {
        (None, None)
    } else {
        (
            Some(paired_bootstrap(&v1, resamples, seed)?),
            Some(paired_bootstrap(&diff, resamples, seed)?),
        )
    };
    Ok(SubsetSummary {
        tasks: outs.len(),
        valid_at_1: m(&|o| o.valid_at(1)),
        valid_at_3: m(&|o| o.valid_at(3)),
        parent_at_1: m(&|o| o.parent_at(1)),
        parent_at_3: m(&|o| o.parent_at(3)),
        valid_mrr: m(&|o| o.valid_rr()),
        parent_mrr: m(&|o| o.parent_rr()),
        valid_at_1_ci: ci,
        vs_nn: vs,
    })
}

/// Held-out ranking outcomes per scorer, with the task tags alongside.
pub struct BenchOutcome {
    pub tags: Vec<(bool, bool)>,
    pub outcomes: BTreeMap<&'static str, Vec<RankOutcome>>,
    pub training: Option<TrainReport>,
    pub train_tasks: usize,
    pub objects: Vec<Value>,
}

pub fn run_bench(records: &[ObjectRecord], cfg: &RunConfig) -> Result<BenchOutcome> {
    let benches = par_map(cfg.workers, records, |_, r| bench_object(r, cfg))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let split = train_split(benches.len(), cfg.seed, cfg.repair.train_fraction);
    let train: Vec<&ObjectBench> = benches.iter().zip(&split).filter(|(_, t)| **t).map(|(b, _)| b).collect();
    let held: Vec<&ObjectBench> = benches.iter().zip(&split).filter(|(_, t)| !**t).map(|(b, _)| b).collect();
    let samples = training_samples(&train);
    let input = samples.first().map_or(0, |s| s.x.len());
    let mut head = SeamHead::seeded(input.max(1), cfg.train.hidden, cfg.train.seed);
    let training = if samples.is_empty() {
        None
    } else {
        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        head.fit_standardization(&xs);
        match train_seam_head(&mut head, &samples, &cfg.train) {
            Ok(r) => Some(r),
            Err(Error::UnbalancedBank) => {
                log::warn!("training bank lacks positives or negatives; seam head left untrained");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let tasks: Vec<&TaskState> = held.iter().flat_map(|b| &b.tasks).collect();
    let mut outcomes = BTreeMap::new();
    for scorer in Scorer::ALL {
        let ranked = par_map(cfg.workers, &tasks, |_, ts| {
            scorer_scores(scorer, ts, &head).and_then(|s| repair_rank(&ts.task, &s))
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        outcomes.insert(scorer.name(), ranked);
    }
    let objects = benches
        .iter()
        .zip(&split)
        .map(|(b, &t)| {
            json!({
                "id": b.id,
                "split": if t { "train" } else { "held-out" },
                "charts": b.charts,
                "tasks": b.tasks.len(),
                "hard": b.tasks.iter().filter(|s| s.task.hard).count(),
                "heuristic_fail": b.tasks.iter().filter(|s| s.task.heuristic_fail).count(),
            })
        })
        .collect();
    Ok(BenchOutcome {
        tags: tasks.iter().map(|t| (t.task.hard, t.task.heuristic_fail)).collect(),
        outcomes,
        training,
        train_tasks: train.iter().map(|b| b.tasks.len()).sum(),
        objects,
    })
}

pub fn repair_bench(records: &[ObjectRecord], cfg: &RunConfig) -> Result<Report> {
    let out = run_bench(records, cfg)?;
    let resamples = cfg.evaluate.bootstrap_resamples;
    let nn = &out.outcomes[Scorer::Nn.name()];
    let mut scorers = serde_json::Map::new();
    for (name, outs) in &out.outcomes {
        let mut subsets = serde_json::Map::new();
        for (subset, keep) in [
            ("all", &(|_: (bool, bool)| true) as &dyn Fn((bool, bool)) -> bool),
            ("hard", &|t: (bool, bool)| t.0),
            ("heuristic_fail", &|t: (bool, bool)| t.1),
        ] {
            let idx: Vec<usize> = (0..outs.len()).filter(|&i| keep(out.tags[i])).collect();
            let sel: Vec<&RankOutcome> = idx.iter().map(|&i| &outs[i]).collect();
            let base: Vec<&RankOutcome> = idx.iter().map(|&i| &nn[i]).collect();
            subsets.insert(subset.into(), serde_json::to_value(summarize(&sel, &base, resamples, cfg.seed)?)?);
        }
        scorers.insert((*name).into(), Value::Object(subsets));
    }
    let aggregate = json!({
        "train_tasks": out.train_tasks,
        "held_out_tasks": out.tags.len(),
        "training": out.training.as_ref().map(|t| json!({
            "initial_loss": t.initial_loss,
            "final_loss": t.final_loss,
            "epochs": t.trace.len() - 1,
        })),
        "scorers": scorers,
    });
    Ok(Report::new("repair-bench", cfg, out.objects, aggregate))
}
