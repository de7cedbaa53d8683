//! Run manifests: the reproducibility record every subcommand emits.
//!
//! A manifest captures everything a rerun needs — the subcommand, every
//! resolved setting (config-file entries plus flag values), the files read
//! and written, and the seed. Rerunning with the same inputs and settings
//! reproduces the outputs bit-exactly; wall time is the only field expected
//! to differ between identical runs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use pedseg_core::config::ConfigMap;

use crate::error::{CliError, Result};

/// File name of the manifest inside the output directory.
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved settings: config-file entries overlaid with the values the
    /// run actually used (defaults included).
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_seconds: f64,
}

/// Accumulates manifest fields while a subcommand runs and owns the shared
/// flag values (config, seed, jobs, output directory).
#[derive(Debug)]
pub struct RunContext {
    pub config: ConfigMap,
    pub seed: u64,
    pub jobs: usize,
    out_dir: PathBuf,
    resolved: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl RunContext {
    pub fn new(
        config_path: Option<&Path>,
        seed: u64,
        jobs: usize,
        out_dir: PathBuf,
    ) -> Result<Self> {
        let config = match config_path {
            Some(path) => ConfigMap::from_file(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
            None => ConfigMap::default(),
        };
        let mut ctx = RunContext {
            resolved: config.entries().clone(),
            config,
            seed,
            jobs,
            out_dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        };
        if let Some(path) = config_path {
            ctx.record_input(path);
        }
        ctx.record("jobs", jobs);
        Ok(ctx)
    }

    /// Records one resolved setting (flag or defaulted config value).
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    pub fn record_input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Writes a file into the output directory and records it.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Input(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes pretty-printed JSON with lexicographically sorted keys, the
    /// stable layout the golden-file tests rely on.
    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        self.write_text(name, &to_sorted_json(value)?)
    }

    /// Writes the manifest, consuming the context. The manifest lists every
    /// other output but not itself.
    pub fn finish(self, subcommand: &str) -> Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config: self.resolved,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Input(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(MANIFEST_NAME);
        std::fs::write(&path, to_sorted_json(&manifest)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Serializes through `serde_json::Value`, whose object type keeps keys
/// sorted, and appends a trailing newline.
pub fn to_sorted_json(value: &impl Serialize) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_json_has_sorted_keys_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = RunContext::new(None, 7, 2, dir.path().to_path_buf()).unwrap();
        ctx.record("theta", 0.1);
        ctx.record_input(Path::new("in.nii.gz"));
        ctx.write_text("report.txt", "ok").unwrap();
        let path = ctx.finish("demo").unwrap();

        let text = std::fs::read_to_string(path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["subcommand"], "demo");
        assert_eq!(value["seed"], 7);
        assert_eq!(value["config"]["jobs"], "2");
        assert_eq!(value["config"]["theta"], "0.1");
        assert_eq!(value["inputs"][0], "in.nii.gz");
        assert_eq!(value["outputs"].as_array().unwrap().len(), 1);
        assert_eq!(value["tool_version"], env!("CARGO_PKG_VERSION"));

        // Top-level keys arrive sorted.
        let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn config_file_entries_flow_into_resolved_map() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "ratio_upper = 2.0\n").unwrap();
        let ctx = RunContext::new(Some(&cfg), 0, 0, dir.path().to_path_buf()).unwrap();
        assert_eq!(ctx.config.get_f64("ratio_upper").unwrap(), Some(2.0));
        assert_eq!(ctx.resolved.get("ratio_upper").unwrap(), "2.0");
        assert_eq!(ctx.inputs.len(), 1);
    }

    #[test]
    fn unreadable_config_is_an_input_error() {
        let err = RunContext::new(
            Some(Path::new("/nonexistent/run.cfg")),
            0,
            0,
            PathBuf::from("."),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
