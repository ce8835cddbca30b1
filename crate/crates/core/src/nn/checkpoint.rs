//! On-disk network checkpoints: `manifest.json` plus `weights.bin`
//! (parameters in layer order, each layer's input-major weights followed by
//! its biases, little-endian float64). Optimizer moments go to
//! `optimizer.bin` (first moments, then second moments) when present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::mlp::{Activation, Mlp};
use crate::binio;
use crate::error::{Result, RgdError};

pub const SCHEMA_VERSION: u32 = 1;
pub const PARAM_ORDER: &str = "per layer: weights input-major (w[k*out+j] maps input k to output j), then biases";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub kind: String,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub param_count: usize,
    pub param_order: String,
    pub seed: u64,
    #[serde(default)]
    pub training: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
    #[serde(default)]
    pub optimizer: Option<OptimizerMeta>,
}

pub struct Checkpoint {
    pub net: Mlp,
    pub manifest: CheckpointManifest,
    pub optimizer: Option<AdamState>,
}

pub fn save(
    dir: &Path,
    kind: &str,
    net: &Mlp,
    seed: u64,
    training: serde_json::Value,
    extra: serde_json::Value,
    optimizer: Option<&AdamState>,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        layer_sizes: net.sizes().to_vec(),
        hidden_activation: net.hidden_activation(),
        output_activation: Activation::Identity,
        param_count: net.num_params(),
        param_order: PARAM_ORDER.to_string(),
        seed,
        training,
        extra,
        optimizer: optimizer.map(|a| OptimizerMeta {
            config: a.config,
            step: a.step,
        }),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    binio::write_f64s(&dir.join("weights.bin"), net.params())?;
    if let Some(adam) = optimizer {
        let mut moments = adam.m.clone();
        moments.extend_from_slice(&adam.v);
        binio::write_f64s(&dir.join("optimizer.bin"), &moments)?;
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let bad = |detail: String| RgdError::Checkpoint {
        path: dir.to_path_buf(),
        detail,
    };
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("unsupported schema version {}", manifest.schema_version)));
    }
    let params = binio::read_f64s(&dir.join("weights.bin"))?;
    if params.len() != manifest.param_count {
        return Err(bad(format!(
            "weights.bin holds {} values, manifest declares {}",
            params.len(),
            manifest.param_count
        )));
    }
    if manifest.layer_sizes.len() < 2 {
        return Err(bad("fewer than two layer sizes".into()));
    }
    let net = Mlp::from_params(&manifest.layer_sizes, manifest.hidden_activation, params);
    let optimizer = match &manifest.optimizer {
        Some(meta) => {
            let moments = binio::read_f64s(&dir.join("optimizer.bin"))?;
            let n = net.num_params();
            if moments.len() != 2 * n {
                return Err(bad("optimizer.bin has the wrong length".into()));
            }
            Some(AdamState {
                config: meta.config,
                step: meta.step,
                m: moments[..n].to_vec(),
                v: moments[n..].to_vec(),
            })
        }
        None => None,
    };
    Ok(Checkpoint {
        net,
        manifest,
        optimizer,
    })
}
