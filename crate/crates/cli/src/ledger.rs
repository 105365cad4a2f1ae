//! Append-only JSON-lines run ledger.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Record {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock seconds per pipeline stage.
    pub stages: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, Value>,
}

impl Record {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash,
            seed,
            status: "ok".into(),
            error: None,
            stages: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn stage(&mut self, name: &str, seconds: f64) {
        *self.stages.entry(name.into()).or_default() += seconds;
    }

    pub fn metric(&mut self, name: &str, v: impl Into<Value>) {
        self.metrics.insert(name.into(), v.into());
    }
}

pub fn append(path: &Path, rec: &Record) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(rec).map_err(std::io::Error::other)?;
    writeln!(f, "{line}")
}
