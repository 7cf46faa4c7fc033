//! normalize → partition → charts → tokens → labeled seam candidates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{par_map, RunConfig};
use crate::chart::ChartBuilder;
use crate::error::{Error, Result};
use crate::ingest::archive::{read_archive, ObjectRecord};
use crate::ingest::normalize_mesh;
use crate::ingest::obj::parse_obj;
use crate::partition::partition_hints;
use crate::seam::{label_candidates, propose_candidates, ChartSupports};
use crate::tokenizer::tokenize_charts;

/// One input object, or the reason it could not be loaded.
pub type Loaded = (String, Result<ObjectRecord>);

fn obj_record(id: &str, bytes: &[u8], cfg: &RunConfig) -> Result<ObjectRecord> {
    let mesh = parse_obj(bytes)?;
    let object = normalize_mesh(id, &mesh)?;
    let partition = partition_hints(&object, &cfg.partition);
    Ok(ObjectRecord::bare(object, partition))
}

/// A directory of `.obj` files (sorted by name, partitioned by hints) or an
/// archive whose records keep their stored partition.
pub fn load_inputs(path: &Path, cfg: &RunConfig) -> Result<Vec<Loaded>> {
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
            .collect();
        files.sort();
        let mut out = Vec::with_capacity(files.len());
        for f in files {
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let rec = std::fs::read(&f).map_err(Error::from).and_then(|b| obj_record(&id, &b, cfg));
            out.push((id, rec));
        }
        Ok(out)
    } else {
        let file = std::fs::File::open(path)?;
        let records = read_archive(std::io::BufReader::new(file))?;
        Ok(records.into_iter().map(|r| (r.object.id.clone(), Ok(r))).collect())
    }
}

/// Builds charts, tokens and labeled candidates for one record.
pub fn process_record(mut rec: ObjectRecord, cfg: &RunConfig) -> Result<ObjectRecord> {
    if rec.partition.assign.len() != rec.object.len() {
        return Err(Error::Data(format!(
            "{}: partition covers {} of {} points",
            rec.object.id,
            rec.partition.assign.len(),
            rec.object.len()
        )));
    }
    let mut charts = ChartBuilder::new(&rec.object, &rec.partition, cfg.chart).build_all();
    if charts.is_empty() {
        return Err(Error::Data(format!("{}: no charts", rec.object.id)));
    }
    tokenize_charts(&mut charts);
    let supports = ChartSupports::new(&rec.object, &charts);
    let mut cands = propose_candidates(&charts, &supports, cfg.seam.eps_contact)?;
    let gt = rec.ground_truth.clone();
    label_candidates(&rec.object, &charts, &supports, &mut cands, &cfg.seam, |a, b| {
        gt.as_ref().is_some_and(|g| g.is_seam(a, b))
    })?;
    rec.charts = charts;
    rec.candidates = cands;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub processed: usize,
    pub skipped: Vec<Skipped>,
}

/// Processes every loaded object; failures are logged and skipped. Zero
/// processed objects is a data error.
pub fn preprocess(inputs: Vec<Loaded>, cfg: &RunConfig) -> Result<(Vec<ObjectRecord>, PreprocessSummary)> {
    let results = par_map(cfg.workers, &inputs, |_, (id, rec)| match rec {
        Ok(r) => (id.clone(), process_record(r.clone(), cfg)),
        Err(e) => (id.clone(), Err(Error::Data(e.to_string()))),
    })?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                skipped.push(Skipped { id, reason: e.to_string() });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no object processed ({} skipped)", skipped.len())));
    }
    let summary = PreprocessSummary {
        processed: records.len(),
        skipped,
    };
    Ok((records, summary))
}
