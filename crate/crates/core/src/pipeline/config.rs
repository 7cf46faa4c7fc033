//! Run configuration: every module config plus run-level parameters.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chart::ChartConfig;
use crate::context::ContextConfig;
use crate::error::{Error, Result};
use crate::metrics::BOOTSTRAP_RESAMPLES;
use crate::partition::PartitionConfig;
use crate::realize::{AuditConfig, RealizeConfig, SWEEP_KEEP_FLOORS};
use crate::seam::head::TrainConfig;
use crate::seam::repair::RepairMode;
use crate::seam::SeamConfig;
use crate::synth::{SynthOptions, MIN_DENSITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub keep_floors: Vec<f64>,
    /// Probability that a chart also decodes each foreign point near its anchor.
    pub leakage: f64,
    pub bootstrap_resamples: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            keep_floors: SWEEP_KEEP_FLOORS.to_vec(),
            leakage: 0.0,
            bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    pub mode: RepairMode,
    pub pool_radius: f64,
    pub train_fraction: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            mode: RepairMode::EdgeBank,
            pool_radius: 0.1,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SerializeConfig {
    pub lambdas: Vec<f64>,
    pub eps: f64,
}

impl Default for SerializeConfig {
    fn default() -> Self {
        SerializeConfig {
            lambdas: vec![0.0, 0.5, 1.0],
            eps: 0.05,
        }
    }
}

/// Paths and worker count are runtime-only: they never reach a report, so
/// outputs do not depend on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthOptions,
    pub partition: PartitionConfig,
    pub chart: ChartConfig,
    pub seam: SeamConfig,
    pub context: ContextConfig,
    pub train: TrainConfig,
    pub realize: RealizeConfig,
    pub audit: AuditConfig,
    pub evaluate: EvaluateConfig,
    pub repair: RepairConfig,
    pub serialize: SerializeConfig,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            synth: SynthOptions::default(),
            partition: PartitionConfig::default(),
            chart: ChartConfig::default(),
            seam: SeamConfig::default(),
            context: ContextConfig::default(),
            train: TrainConfig::default(),
            realize: RealizeConfig::default(),
            audit: AuditConfig::default(),
            evaluate: EvaluateConfig::default(),
            repair: RepairConfig::default(),
            serialize: SerializeConfig::default(),
            workers: 1,
            input: None,
            output: None,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Sets `path` (dot separated) in `root`, refusing keys absent from `root`.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_err(format!("{path}: {part} is not a section")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| config_err(format!("unknown key {path}")))?;
        if k + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    Ok(())
}

impl RunConfig {
    /// A JSON document, or `key = value` lines with dotted keys and JSON or
    /// bare-string values; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let cfg: RunConfig = serde_json::from_str(text).map_err(config_err)?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            RunConfig::default().apply(text)
        }
    }

    /// `self` with the `key = value` lines of `text` applied in order.
    pub fn apply(&self, text: &str) -> Result<RunConfig> {
        let mut root = serde_json::to_value(self)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            set_path(&mut root, k, value)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(root).map_err(config_err)?;
        cfg.workers = self.workers;
        cfg.input.clone_from(&self.input);
        cfg.output.clone_from(&self.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(config_err(m));
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        if self.synth.density < MIN_DENSITY {
            return fail("synth.density below the minimum of 100");
        }
        if !(self.seam.eps_contact > 0.0) {
            return fail("seam.eps_contact must be positive");
        }
        if !(self.chart.radius > 0.0) {
            return fail("chart.radius must be positive");
        }
        if !(self.realize.keep_floor > 0.0 && self.realize.keep_floor <= 1.0) {
            return fail("realize.keep_floor must lie in (0, 1]");
        }
        if self.evaluate.keep_floors.is_empty()
            || self.evaluate.keep_floors.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return fail("evaluate.keep_floors must be nonempty values in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.evaluate.leakage) {
            return fail("evaluate.leakage must lie in [0, 1]");
        }
        if self.evaluate.bootstrap_resamples == 0 {
            return fail("evaluate.bootstrap_resamples must be positive");
        }
        if !(self.repair.train_fraction > 0.0 && self.repair.train_fraction < 1.0) {
            return fail("repair.train_fraction must lie in (0, 1)");
        }
        if !(self.repair.pool_radius > 0.0) {
            return fail("repair.pool_radius must be positive");
        }
        if !(self.serialize.eps > 0.0) || self.serialize.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return fail("serialize.eps must be positive and lambdas non-negative");
        }
        if self.train.epochs == 0 || self.train.hidden == 0 || !(self.train.lr > 0.0) {
            return fail("train.epochs, train.hidden and train.lr must be positive");
        }
        self.context.validate().map_err(config_err)?;
        Ok(())
    }
}
