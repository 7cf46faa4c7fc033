//! Line-delimited chart archive: one header line, then one JSON object record
//! per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::ingest::SurfaceObject;
use crate::partition::Partition;
use crate::seam::SeamCandidate;
use crate::synth::GroundTruth;

pub const FORMAT: &str = "c2lt-archive";
pub const VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
}

/// Everything stored for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object: SurfaceObject,
    pub partition: Partition,
    #[serde(default)]
    pub charts: Vec<Chart>,
    #[serde(default)]
    pub candidates: Vec<SeamCandidate>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
}

impl ObjectRecord {
    pub fn bare(object: SurfaceObject, partition: Partition) -> Self {
        ObjectRecord {
            object,
            partition,
            charts: Vec::new(),
            candidates: Vec::new(),
            ground_truth: None,
        }
    }
}

pub fn header_line() -> String {
    format!("{{\"format\":\"{FORMAT}\",\"version\":{VERSION}}}")
}

pub fn write_archive<W: Write>(mut out: W, records: &[ObjectRecord]) -> Result<()> {
    writeln!(out, "{}", header_line())?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn archive_to_string(records: &[ObjectRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_archive(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("archive is utf-8"))
}

pub fn read_archive<R: BufRead>(input: R) -> Result<Vec<ObjectRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let h: Header = serde_json::from_str(&line).map_err(|e| Error::Archive {
                line: lineno,
                message: format!("bad header: {e}"),
            })?;
            if h.format != FORMAT {
                return Err(Error::Archive {
                    line: lineno,
                    message: format!("unexpected format {:?}", h.format),
                });
            }
            if h.version != VERSION {
                return Err(Error::ArchiveVersion(h.version));
            }
            saw_header = true;
            continue;
        }
        let rec: ObjectRecord = serde_json::from_str(&line).map_err(|e| Error::Archive {
            line: lineno,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn read_archive_str(text: &str) -> Result<Vec<ObjectRecord>> {
    read_archive(text.as_bytes())
}
