//! Fixed-object evaluation: chart decoding, component-owned realization over
//! a keep-floor sweep, structural metrics and a paired bootstrap against the
//! unfiltered decode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{mean, par_map, Report, RunConfig};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::ingest::archive::ObjectRecord;
use crate::metrics::{paired_bootstrap, structural_report, StructuralReport};
use crate::nn::NnIndex;
use crate::realize::{realize_component_owned, support_violation, RealizeConfig};
use crate::synth::object_seed;

/// Decoded points with their owning partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub owner: Vec<usize>,
}

/// Union of every chart's support in object space. With `leakage > 0` each
/// chart also claims foreign points within `radius` of its anchor, each with
/// probability `leakage`.
pub fn decode_charts(rec: &ObjectRecord, leakage: f64, radius: f64, seed: u64) -> Decoded {
    let mut out = Decoded {
        points: Vec::new(),
        normals: Vec::new(),
        owner: Vec::new(),
    };
    let obj = &rec.object;
    let index = NnIndex::new(&obj.points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in &rec.charts {
        out.points.extend(c.world_points());
        out.normals.extend(c.world_normals());
        out.owner.extend(std::iter::repeat_n(c.partition, c.local_points.len()));
        if leakage > 0.0 {
            for i in index.within(c.anchor, radius) {
                if rec.partition.assign[i] != c.partition && rng.random_bool(leakage) {
                    out.points.push(obj.points[i]);
                    out.normals.push(obj.normals[i]);
                    out.owner.push(c.partition);
                }
            }
        }
    }
    out
}

/// Ground-truth component holding most of each partition's points, ties to
/// the lower id.
pub fn partition_to_component(rec: &ObjectRecord) -> Vec<usize> {
    let k = rec.object.component_count();
    let mut counts = vec![vec![0usize; k]; rec.partition.count];
    for (p, &c) in rec.partition.assign.iter().zip(&rec.object.component_of) {
        counts[*p][c] += 1;
    }
    counts
        .iter()
        .map(|row| (0..k).max_by(|&a, &b| row[a].cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0))
        .collect()
}

fn check_record(rec: &ObjectRecord) -> Result<()> {
    let obj = &rec.object;
    if rec.charts.is_empty() {
        return Err(Error::Data(format!("{}: record has no charts; run preprocess first", obj.id)));
    }
    if rec.partition.assign.len() != obj.len() || obj.component_of.len() != obj.len() {
        return Err(Error::Data(format!("{}: ownership does not cover every point", obj.id)));
    }
    if let Some(gt) = &rec.ground_truth {
        if gt.component_count != obj.component_count() {
            return Err(Error::Data(format!(
                "{}: ground truth declares {} components, object has {}",
                obj.id,
                gt.component_count,
                obj.component_count()
            )));
        }
    }
    if rec.charts.iter().any(|c| c.partition >= rec.partition.count) {
        return Err(Error::Data(format!("{}: chart partition out of range", obj.id)));
    }
    Ok(())
}

/// Structural report of `points[k]` for `keep[k]`, grouped by ground-truth component.
fn score(rec: &ObjectRecord, dec: &Decoded, keep: &[bool], delta_support: f64) -> Result<StructuralReport> {
    let obj = &rec.object;
    let map = partition_to_component(rec);
    let k = obj.component_count();
    let mut pred = vec![Vec::new(); k];
    let mut pred_n = vec![Vec::new(); k];
    for i in 0..dec.points.len() {
        if keep[i] {
            let c = map[dec.owner[i]];
            pred[c].push(dec.points[i]);
            pred_n[c].push(dec.normals[i]);
        }
    }
    let supports = obj.component_supports();
    let support_n: Vec<Vec<Vec3>> = (0..k)
        .map(|c| obj.component_points(c).iter().map(|&i| obj.normals[i]).collect())
        .collect();
    let present: Vec<Vec<Vec3>> = pred.iter().filter(|p| !p.is_empty()).cloned().collect();
    let violations = support_violation(&present, obj.min_z(), delta_support)?.len();
    structural_report(&pred, &pred_n, &supports, &support_n, obj.extent, violations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub keep_floor: f64,
    pub margin: f64,
    pub decoded: usize,
    pub kept: usize,
    /// Smallest per-partition kept fraction.
    pub min_kept_fraction: f64,
    pub owned: StructuralReport,
    pub unowned: StructuralReport,
}

/// Rows for one object decoded from its charts, one per keep floor.
pub fn evaluate_record(rec: &ObjectRecord, index: usize, cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    check_record(rec)?;
    let dec = decode_charts(rec, cfg.evaluate.leakage, cfg.chart.radius, object_seed(cfg.seed, index));
    evaluate_decoded(rec, &dec, cfg)
}

/// Rows for an explicit decode of `rec`, one per keep floor.
pub fn evaluate_decoded(rec: &ObjectRecord, dec: &Decoded, cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    if dec.owner.iter().any(|&p| p >= rec.partition.count) {
        return Err(Error::UnknownPartition(rec.partition.count));
    }
    let supports = rec.partition.supports(&rec.object.points);
    let all = vec![true; dec.points.len()];
    let unowned = score(rec, dec, &all, cfg.audit.delta_support)?;
    let mut rows = Vec::new();
    for &keep_floor in &cfg.evaluate.keep_floors {
        let rc = RealizeConfig {
            margin: cfg.realize.margin,
            keep_floor,
        };
        let keep = realize_component_owned(&dec.points, &dec.owner, &supports, &rc)?;
        let mut total = vec![0usize; rec.partition.count];
        let mut kept = vec![0usize; rec.partition.count];
        for (i, &p) in dec.owner.iter().enumerate() {
            total[p] += 1;
            kept[p] += keep[i] as usize;
        }
        let min_kept_fraction = (0..total.len())
            .filter(|&p| total[p] > 0)
            .map(|p| kept[p] as f64 / total[p] as f64)
            .fold(1.0, f64::min);
        rows.push(EvalRow {
            id: rec.object.id.clone(),
            keep_floor,
            margin: rc.margin,
            decoded: dec.points.len(),
            kept: kept.iter().sum(),
            min_kept_fraction,
            owned: score(rec, dec, &keep, cfg.audit.delta_support)?,
            unowned: unowned.clone(),
        });
    }
    Ok(rows)
}

fn aggregate_rows(rows: &[&EvalRow], cfg: &RunConfig, keep_floor: f64) -> Result<serde_json::Value> {
    let m = |f: &dyn Fn(&EvalRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    let improvement: Vec<f64> = rows
        .iter()
        .map(|r| r.unowned.contamination - r.owned.contamination)
        .collect();
    let boot = paired_bootstrap(&improvement, cfg.evaluate.bootstrap_resamples, cfg.seed)?;
    Ok(json!({
        "keep_floor": keep_floor,
        "margin": cfg.realize.margin,
        "objects": rows.len(),
        "chamfer": m(&|r| r.owned.chamfer),
        "hausdorff": m(&|r| r.owned.hausdorff),
        "contamination": m(&|r| r.owned.contamination),
        "contamination_unowned": m(&|r| r.unowned.contamination),
        "separation": m(&|r| r.owned.separation),
        "normal_consistency": m(&|r| r.owned.normal_consistency),
        "support_violations": m(&|r| r.owned.support_violations as f64),
        "min_kept_fraction": rows.iter().map(|r| r.min_kept_fraction).fold(1.0, f64::min),
        "contamination_reduction": boot,
    }))
}

pub fn evaluate(records: &[ObjectRecord], cfg: &RunConfig) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::Data("archive has no objects".into()));
    }
    let per_object = par_map(cfg.workers, records, |i, r| evaluate_record(r, i, cfg))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<EvalRow> = per_object.into_iter().flatten().collect();
    let mut sweep = Vec::new();
    for &f in &cfg.evaluate.keep_floors {
        let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.keep_floor == f).collect();
        sweep.push(aggregate_rows(&sel, cfg, f)?);
    }
    let objects = rows.iter().map(serde_json::to_value).collect::<serde_json::Result<Vec<_>>>()?;
    Ok(Report::new("evaluate", cfg, objects, json!({ "rows": sweep })))
}
