use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rgd_core::nn::checkpoint::SCHEMA_VERSION;
use rgd_core::pipeline::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub checkpoint_schema: u32,
    pub parallel: bool,
    pub config: RunConfig,
    pub args: BTreeMap<String, String>,
    /// sha256 of every file read, keyed by path relative to the output dir.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub phases: Vec<Phase>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Short digest of the resolved configuration, stamped into reports.
pub fn config_digest(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))[..16].to_string()
}

pub struct Recorder {
    out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Recorder {
            out: PathBuf::from(&cfg.out),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                checkpoint_schema: SCHEMA_VERSION,
                parallel: rgd_core::parallel::is_parallel(),
                config: cfg.clone(),
                args: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                phases: Vec::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.manifest.args.insert(key.to_string(), value.to_string());
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let k = self.key(path);
        self.manifest.inputs.insert(k, sha256_file(path)?);
        Ok(())
    }

    pub fn inputs_in(&mut self, dir: &Path) -> Result<()> {
        for p in files_in(dir)? {
            self.input(&p)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let k = self.key(path);
        self.manifest.outputs.insert(k, sha256_file(path)?);
        Ok(())
    }

    pub fn outputs_in(&mut self, dir: &Path) -> Result<()> {
        for p in files_in(dir)? {
            self.output(&p)?;
        }
        Ok(())
    }

    /// Closes the current phase, timing it from the previous mark.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.phases.push(Phase {
            name: name.to_string(),
            seconds: (now - self.started).as_secs_f64(),
        });
        self.started = now;
    }

    pub fn finish(self) -> Result<RunManifest> {
        let path = self.out.join(format!("manifest_{}.json", self.manifest.command));
        fs::create_dir_all(&self.out)?;
        fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

fn files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}
