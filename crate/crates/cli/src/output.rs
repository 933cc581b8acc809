use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Per-run output directory with a manifest written last.
pub struct RunDir {
    pub dir: PathBuf,
    files: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        let dir = root.join(command);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        passed: bool,
        summary: BTreeMap<String, serde_json::Value>,
    ) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.to_string(),
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            files: std::mem::take(&mut self.files),
            passed,
            summary,
            timings_s: std::mem::take(&mut self.timings),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.dir)
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config_hash: String,
    version: String,
    config: ExperimentConfig,
    files: Vec<String>,
    passed: bool,
    summary: BTreeMap<String, serde_json::Value>,
    timings_s: BTreeMap<String, f64>,
}
