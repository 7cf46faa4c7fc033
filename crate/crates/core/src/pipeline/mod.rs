//! End-to-end commands over archives: preprocess, evaluate, repair-bench,
//! serialize-audit and report summaries. Every command is a pure function of
//! its inputs and the echoed [`RunConfig`].

pub mod audit;
pub mod config;
pub mod evaluate;
pub mod preprocess;
pub mod repair;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::RunConfig;

use crate::error::{Error, Result};

/// Maps `f` over `items` on `workers` threads; output order follows input order.
pub fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invariant(format!("worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
}

/// `meta` echoes the config; `objects` holds per-object rows in archive order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub objects: Vec<Value>,
    pub aggregate: Value,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig, objects: Vec<Value>, aggregate: Value) -> Report {
        Report {
            meta: Meta {
                tool: "chartseam".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config: cfg.clone(),
            },
            objects,
            aggregate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Mean of `v`, zero when empty.
pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_for_any_worker_count() {
        let items: Vec<u64> = (0..500).collect();
        let one = par_map(1, &items, |i, x| (i as u64) * 1000 + x * x).unwrap();
        let eight = par_map(8, &items, |i, x| (i as u64) * 1000 + x * x).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one[7], 7000 + 49);
    }
}
