//! Config-driven experiment runner around `nlsq-core`.
//!
//! A run is one command plus its configuration. It produces a [`RunRecord`]
//! (JSON, schema 1), CSV tables and other artifacts in the output directory,
//! and a manifest with their SHA-256 digests.

pub mod commands;
pub mod config;
pub mod formats;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{parse_config, parse_config_for, Command, ConfigError, RunConfig};
use formats::{write_files, ManifestEntry, Table};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "nlsq";

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] nlsq_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{key} = {requested} exceeds the budget {budget}")]
    Budget { key: String, requested: u64, budget: u64 },
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One tolerance comparison. Only `asserted` checks decide the exit status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
    pub asserted: bool,
    /// What the value is compared against.
    pub oracle: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64, oracle: &str) -> Self {
        Check::new(name, value, Relation::AtMost, limit, oracle)
    }

    pub fn at_least(name: &str, value: f64, limit: f64, oracle: &str) -> Self {
        Check::new(name, value, Relation::AtLeast, limit, oracle)
    }

    fn new(name: &str, value: f64, relation: Relation, limit: f64, oracle: &str) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= limit,
            Relation::AtLeast => value >= limit,
        };
        Check { name: name.into(), value, relation, limit, passed, asserted: true, oracle: oracle.into() }
    }

    /// Reported but not asserted.
    pub fn report_only(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Canonical configuration text; replaying it reproduces `payload`.
    pub config: String,
    pub warnings: Vec<String>,
    pub status: Status,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub payload: serde_json::Value,
    pub wall_time_s: f64,
    pub outputs: Vec<ManifestEntry>,
}

impl RunRecord {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 2,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// What a command hands back before anything is written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub payload: serde_json::Value,
    pub tables: Vec<Table>,
    pub files: Vec<(String, Vec<u8>)>,
}

/// A finished run whose artifacts are still in memory.
#[derive(Debug)]
pub struct Run {
    pub record: RunRecord,
    pub files: Vec<(String, Vec<u8>)>,
}

/// Runs the experiment on a pool of `config.workers` threads.
pub fn execute(config: &RunConfig) -> Result<Run, LabError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| LabError::Unsupported(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let result = pool.install(|| commands::run(config));
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut record = RunRecord {
        schema: SCHEMA_VERSION,
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.command.to_string(),
        config: config.to_text(),
        warnings: config.warnings.clone(),
        status: Status::Pass,
        error: None,
        checks: Vec::new(),
        payload: serde_json::Value::Null,
        wall_time_s,
        outputs: Vec::new(),
    };
    let mut files = Vec::new();
    match result {
        Ok(outcome) => {
            if outcome.checks.iter().any(|c| c.asserted && !c.passed) {
                record.status = Status::Fail;
            }
            record.checks = outcome.checks;
            record.payload = outcome.payload;
            for t in &outcome.tables {
                files.push((format!("{}.csv", t.name), t.to_csv()?.into_bytes()));
            }
            files.extend(outcome.files);
        }
        Err(LabError::Io(e)) => return Err(LabError::Io(e)),
        Err(e) => {
            record.status = Status::Error;
            record.error = Some(e.to_string());
        }
    }
    Ok(Run { record, files })
}

impl Run {
    /// Writes the artifacts, `record.json` and `manifest.json` under `dir`.
    pub fn write(&mut self, dir: &Path) -> Result<(), LabError> {
        self.record.outputs = write_files(dir, &self.files)?;
        let record = serde_json::to_vec_pretty(&self.record)?;
        let mut manifest = self.record.outputs.clone();
        manifest.extend(write_files(dir, &[("record.json".to_string(), record)])?);
        let body: BTreeMap<&str, serde_json::Value> = [
            ("schema", serde_json::json!(SCHEMA_VERSION)),
            ("files", serde_json::to_value(&manifest)?),
        ]
        .into_iter()
        .collect();
        write_files(dir, &[("manifest.json".to_string(), serde_json::to_vec_pretty(&body)?)])?;
        Ok(())
    }
}

/// [`execute`] followed by [`Run::write`] into the configured output directory.
pub fn dispatch(config: &RunConfig) -> Result<RunRecord, LabError> {
    let mut run = execute(config)?;
    run.write(&config.output_dir)?;
    Ok(run.record)
}
