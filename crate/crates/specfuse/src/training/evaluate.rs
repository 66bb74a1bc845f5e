//! Scoring a manifest with a trained network and assembling evaluation
//! reports.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::features::{load_waveform, CropPolicy};
use crate::metrics::{
    compute_eer, compute_min_tdcf, per_attack_breakdown, write_score_file, ScoreRecord,
    TdcfParams,
};
use crate::model::SpecFuseNet;
use crate::nn::ParamStore;

use super::checkpoint::{file_fingerprint, fnv1a, load_checkpoint};

/// Pooled and per-attack metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pooled_eer: f64,
    pub pooled_min_tdcf: f64,
    pub eer_threshold: f64,
    pub per_attack_eer: std::collections::BTreeMap<String, f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub checkpoint_id: String,
    pub config_hash: String,
}

/// Score every utterance of a labeled manifest with an in-memory network.
/// Forward passes are sharded across workers; output order follows the
/// manifest.
pub(crate) fn score_with_net(
    net: &SpecFuseNet,
    ps: &ParamStore,
    manifest: &Manifest,
) -> Result<Vec<ScoreRecord>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<ScoreRecord> {
            let path = manifest.audio_path(&entry.utt_id)?;
            let w = load_waveform(&path, net.feature_cfg.target_len, CropPolicy::Head)?;
            let out = net.forward(ps, &w)?;
            ScoreRecord::new(
                entry.utt_id.clone(),
                entry.attack_id.clone(),
                entry.key,
                out.logit,
            )
        })
        .collect()
}

/// Load a checkpoint, score `manifest`, write the score file, and compute
/// pooled plus per-attack metrics.
pub fn evaluate(
    checkpoint: &Path,
    manifest: &Manifest,
    tdcf: &TdcfParams,
    score_path: &Path,
) -> Result<EvalReport> {
    tdcf.validate()?;
    let (net, ps, meta) = load_checkpoint(checkpoint)?;
    let records = score_with_net(&net, &ps, manifest)?;
    write_score_file(score_path, &records)?;
    let (pooled_eer, eer_threshold) = compute_eer(&records)?;
    let (pooled_min_tdcf, _) = compute_min_tdcf(&records, tdcf)?;
    let per_attack_eer = per_attack_breakdown(&records)?;
    let cfg_json = serde_json::to_vec(&(&net.cfg, &net.feature_cfg)).unwrap();
    Ok(EvalReport {
        pooled_eer,
        pooled_min_tdcf,
        eer_threshold,
        per_attack_eer,
        n_trials: records.len(),
        seed: meta.seed,
        checkpoint_id: file_fingerprint(checkpoint)?,
        config_hash: format!("{:016x}", fnv1a(&cfg_json)),
    })
}

/// Score a manifest with a checkpoint without computing metrics (used by the
/// blind scoring path).
pub fn score_manifest(
    checkpoint: &Path,
    manifest: &Manifest,
) -> Result<Vec<ScoreRecord>> {
    let (net, ps, _) = load_checkpoint(checkpoint)?;
    score_with_net(&net, &ps, manifest)
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report encode: {e}")))?;
        crate::fsutil::write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: bad report: {e}", path.display())))
    }
}
