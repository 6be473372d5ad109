use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Record of one run: enough to repeat it, plus timings and a result summary.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub arguments: Value,
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, Value>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, arguments: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            argv: std::env::args().collect(),
            arguments: serde_json::to_value(arguments)?,
            outputs: Vec::new(),
            summary: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        })
    }

    /// Runs `f`, recording its wall time under `label`.
    pub fn time<R>(&mut self, label: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(label.to_owned(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_owned(), value);
    }

    /// Writes `manifest.json` via a temporary file and rename.
    pub fn write(&self, outdir: &Path) -> Result<()> {
        let tmp = outdir.join(".manifest.json.tmp");
        let dest = outdir.join("manifest.json");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &dest).with_context(|| format!("renaming to {}", dest.display()))?;
        Ok(())
    }
}
