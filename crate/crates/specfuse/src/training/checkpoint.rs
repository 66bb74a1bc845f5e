//! Checkpoints: every parameter tensor keyed by its hierarchical name, with
//! the model and feature configurations embedded so a checkpoint alone
//! reconstructs the network.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureConfig, ModelConfig, SpecFuseNet};
use crate::nn::ParamStore;
use crate::tensorfile;

pub const CHECKPOINT_KIND: &str = "specfuse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance carried inside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub dev_eer: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    model_config: ModelConfig,
    feature_config: FeatureConfig,
    #[serde(default)]
    meta: CheckpointMeta,
}

pub fn save_checkpoint(
    path: &Path,
    net: &SpecFuseNet,
    ps: &ParamStore,
    meta: &CheckpointMeta,
) -> Result<()> {
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        model_config: net.cfg.clone(),
        feature_config: net.feature_cfg.clone(),
        meta: meta.clone(),
    };
    let meta_json = serde_json::to_value(&header)
        .map_err(|e| Error::Internal(format!("checkpoint header encode: {e}")))?;
    tensorfile::write_container(path, CHECKPOINT_KIND, meta_json, &ps.export_tensors())
}

pub fn load_checkpoint(path: &Path) -> Result<(SpecFuseNet, ParamStore, CheckpointMeta)> {
    let container = tensorfile::read_container(path)?;
    if container.kind != CHECKPOINT_KIND {
        return Err(Error::Input(format!(
            "{} is a '{}' container, not a checkpoint",
            path.display(),
            container.kind
        )));
    }
    let header: CheckpointHeader = serde_json::from_value(container.meta.clone())
        .map_err(|e| Error::Input(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Input(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            header.version
        )));
    }
    // construct with a throwaway seed, then overwrite every tensor
    let mut ps = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = SpecFuseNet::new(&mut ps, &mut rng, header.model_config, header.feature_config)?;
    ps.load_tensors(&container.tensor_map())?;
    Ok((net, ps, header.meta))
}

/// FNV-1a of a file's bytes, used as a stable short identifier.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
