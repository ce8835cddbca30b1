//! Layered configuration: defaults, then the TOML file, then `RGD_*`
//! environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rgd_core::pipeline::RunConfig;
use toml::Value;

pub const ENV_PREFIX: &str = "RGD_";

/// Flag values that override every other layer.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub workers: Option<usize>,
    pub strategy: Option<String>,
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| anyhow!("empty override key"))?;
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override path crosses non-table key {key:?}"))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// `RGD_SAMPLER__STEPS=250` sets `sampler.steps`; values are parsed as TOML
/// scalars and fall back to strings.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> BTreeMap<Vec<String>, Value> {
    vars.into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            if rest.is_empty() {
                return None;
            }
            let path = rest.split("__").map(|p| p.to_ascii_lowercase()).collect();
            Some((path, parse_scalar(&v)))
        })
        .collect()
}

pub fn resolve(file: Option<&Path>, env: &BTreeMap<Vec<String>, Value>, flags: &FlagOverrides) -> Result<RunConfig> {
    let mut table = toml::Table::try_from(RunConfig::default())?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let from_file: toml::Table = text
            .parse()
            .with_context(|| format!("invalid TOML in {}", path.display()))?;
        merge(&mut table, from_file);
    }
    for (path, value) in env {
        set_path(&mut table, path, value.clone())?;
    }
    let mut cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e| anyhow!("invalid configuration: {e}"))?;
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    if let Some(w) = flags.workers {
        cfg.workers = w;
    }
    if let Some(s) = &flags.strategy {
        cfg.sampler.strategy = s.clone();
    }
    cfg.validate()?;
    if cfg.out.is_empty() {
        bail!("output directory must not be empty");
    }
    Ok(cfg)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
