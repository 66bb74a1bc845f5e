//! Flat key-value run configuration with include/override semantics.
//!
//! Format, one statement per line:
//!
//! ```text
//! # comment
//! include relative/or/absolute.cfg
//! train.epochs = 5
//! model.preset = tiny
//! ```
//!
//! Includes are inlined where they appear, so later assignments override
//! earlier ones (including anything an earlier include set). The resolved
//! map is written next to run outputs as the reproducibility snapshot;
//! feeding that snapshot back reproduces the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SincPostproc;
use crate::losses::{ReconNorm, WbceWeights};
use crate::metrics::TdcfParams;
use crate::model::{FeatureConfig, ModelConfig};

use super::TrainConfig;

/// Dataset paths for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_protocol: Option<PathBuf>,
    pub dev_protocol: Option<PathBuf>,
    pub eval_protocol: Option<PathBuf>,
    pub train_audio: Option<PathBuf>,
    pub dev_audio: Option<PathBuf>,
    pub eval_audio: Option<PathBuf>,
}

/// Everything a run needs: training hyperparameters, scoring parameters,
/// dataset locations, and the seed list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub train: TrainConfig,
    pub tdcf: TdcfParams,
    pub data: DataPaths,
    pub seeds: Vec<u64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            train: TrainConfig::default(),
            tdcf: TdcfParams::default(),
            data: DataPaths::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

/// Read a config file, resolving `include` lines depth-first.
pub fn parse_run_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut visiting = Vec::new();
    parse_into(path, &mut map, &mut visiting)?;
    Ok(map)
}

fn parse_into(
    path: &Path,
    map: &mut BTreeMap<String, String>,
    visiting: &mut Vec<PathBuf>,
) -> Result<()> {
    let canon = path
        .canonicalize()
        .map_err(|e| Error::io(path, e))?;
    if visiting.contains(&canon) {
        return Err(Error::Config(format!("config include cycle at {}", path.display())));
    }
    visiting.push(canon);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("include ") {
            let inc = rest.trim();
            let inc_path = if Path::new(inc).is_absolute() {
                PathBuf::from(inc)
            } else {
                path.parent().unwrap_or(Path::new(".")).join(inc)
            };
            parse_into(&inc_path, map, visiting)?;
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                return Err(Error::Config(format!(
                    "{}:{}: expected 'key = value' or 'include path', got '{line}'",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    visiting.pop();
    Ok(())
}

/// Render a resolved map in snapshot form (sorted, one `key = value` line).
pub fn render_run_config(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

impl RunSpec {
    /// Build a spec from a resolved key map. Unknown keys are rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunSpec> {
        let mut spec = RunSpec::default();
        // presets first so specific keys can override them
        if let Some(p) = map.get("model.preset") {
            match p.as_str() {
                "default" => {
                    spec.train.model = ModelConfig::default();
                    spec.train.features = FeatureConfig::default();
                }
                "tiny" => {
                    spec.train.model = ModelConfig::tiny();
                    spec.train.features = FeatureConfig::tiny();
                    spec.train.epochs = 5;
                    spec.train.batch_size = 16;
                }
                "micro" => {
                    spec.train.model = ModelConfig::micro();
                    spec.train.features = FeatureConfig::micro();
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown model.preset '{other}' (expected default|tiny|micro)"
                    )))
                }
            }
        }
        let mut w_pos: Option<f64> = None;
        let mut w_neg: Option<f64> = None;
        for (key, value) in map {
            let v = value.as_str();
            match key.as_str() {
                "model.preset" => {}
                "train.epochs" => spec.train.epochs = parse_num(key, v)?,
                "train.batch_size" => spec.train.batch_size = parse_num(key, v)?,
                "train.lr" => spec.train.lr = parse_num(key, v)?,
                "train.lr_floor" => spec.train.lr_floor = parse_num(key, v)?,
                "train.alpha" => spec.train.alpha = parse_num(key, v)?,
                "train.seed" => spec.train.seed = parse_num(key, v)?,
                "train.seeds" => {
                    spec.seeds = v
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<u64>().map_err(|_| {
                                Error::Config(format!("bad seed list '{v}' for {key}"))
                            })
                        })
                        .collect::<Result<Vec<u64>>>()?;
                }
                "train.recon_norm" => {
                    spec.train.recon_norm = match v {
                        "mean_abs" => ReconNorm::MeanAbs,
                        "mean_square" => ReconNorm::MeanSquare,
                        _ => {
                            return Err(Error::Config(format!(
                                "bad {key} '{v}' (expected mean_abs|mean_square)"
                            )))
                        }
                    }
                }
                "train.w_pos" => w_pos = Some(parse_num(key, v)?),
                "train.w_neg" => w_neg = Some(parse_num(key, v)?),
                "model.fusion_mode" => spec.train.model.fusion_mode = v.parse()?,
                "model.decoders_enabled" => {
                    spec.train.model.decoders_enabled = parse_bool(key, v)?
                }
                "model.attention_hidden" => {
                    spec.train.model.attention_hidden = parse_num(key, v)?
                }
                "features.target_len" => spec.train.features.target_len = parse_num(key, v)?,
                "sinc.n_filters" => spec.train.features.sinc.n_filters = parse_num(key, v)?,
                "sinc.kernel_len" => spec.train.features.sinc.kernel_len = parse_num(key, v)?,
                "sinc.stride" => spec.train.features.sinc.stride = parse_num(key, v)?,
                "sinc.learnable" => spec.train.features.sinc.learnable = parse_bool(key, v)?,
                "sinc.postproc" => {
                    spec.train.features.sinc.postproc = match v {
                        "abs_max_norm" => SincPostproc::AbsMaxNorm,
                        "none" => SincPostproc::None,
                        _ => {
                            return Err(Error::Config(format!(
                                "bad {key} '{v}' (expected abs_max_norm|none)"
                            )))
                        }
                    }
                }
                "lfcc.n_ceps" => spec.train.features.lfcc.n_ceps = parse_num(key, v)?,
                "lfcc.n_filters" => spec.train.features.lfcc.n_filters = parse_num(key, v)?,
                "lfcc.with_deltas" => {
                    spec.train.features.lfcc.with_deltas = parse_bool(key, v)?
                }
                "tdcf.c_miss" => spec.tdcf.c_miss = parse_num(key, v)?,
                "tdcf.c_fa" => spec.tdcf.c_fa = parse_num(key, v)?,
                "tdcf.p_tar" => spec.tdcf.p_tar = parse_num(key, v)?,
                "tdcf.p_non" => spec.tdcf.p_non = parse_num(key, v)?,
                "tdcf.p_spoof" => spec.tdcf.p_spoof = parse_num(key, v)?,
                "tdcf.asv_p_miss" => spec.tdcf.asv.p_miss_asv = parse_num(key, v)?,
                "tdcf.asv_p_fa" => spec.tdcf.asv.p_fa_asv = parse_num(key, v)?,
                "tdcf.asv_p_spoof_accept" => {
                    spec.tdcf.asv.p_spoof_accept_asv = parse_num(key, v)?
                }
                "data.train_protocol" => spec.data.train_protocol = Some(v.into()),
                "data.dev_protocol" => spec.data.dev_protocol = Some(v.into()),
                "data.eval_protocol" => spec.data.eval_protocol = Some(v.into()),
                "data.train_audio" => spec.data.train_audio = Some(v.into()),
                "data.dev_audio" => spec.data.dev_audio = Some(v.into()),
                "data.eval_audio" => spec.data.eval_audio = Some(v.into()),
                other => return Err(Error::Config(format!("unknown config key '{other}'"))),
            }
        }
        match (w_pos, w_neg) {
            (Some(p), Some(n)) => spec.train.wbce_weights = Some(WbceWeights { w_pos: p, w_neg: n }),
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "train.w_pos and train.w_neg must be given together".into(),
                ))
            }
        }
        Ok(spec)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("bad numeric value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{v}' for {key}"))),
    }
}

/// Flat key paths on which two training configs differ.
pub fn config_diff(a: &TrainConfig, b: &TrainConfig) -> Vec<String> {
    let va = serde_json::to_value(a).expect("config serializes");
    let vb = serde_json::to_value(b).expect("config serializes");
    let mut out = Vec::new();
    diff_value("", &va, &vb, &mut out);
    out.sort();
    out
}

fn diff_value(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let keys: std::collections::BTreeSet<&String> =
                ma.keys().chain(mb.keys()).collect();
            for k in keys {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match (ma.get(k), mb.get(k)) {
                    (Some(x), Some(y)) => diff_value(&path, x, y, out),
                    _ => out.push(path),
                }
            }
        }
        _ => {
            if a != b {
                out.push(prefix.to_string());
            }
        }
    }
}
