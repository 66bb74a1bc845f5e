//! Ablation presets: run controlled config variants under one seed/budget
//! and emit a comparison table.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::metrics::TdcfParams;
use crate::model::FusionMode;

use super::runconfig::config_diff;
use super::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblatePreset {
    /// raw-only vs power-only vs the fused model (three EER columns).
    Spectrograms,
    /// Coarse concatenation vs full attention fusion.
    Concat,
    /// Raw-only branch vs the fused baseline.
    RawOnly,
    /// Power-only branch vs the fused baseline.
    PowerOnly,
    /// Decoders off vs on; the two configs differ in exactly one key.
    NoDecoders,
    /// alpha in {1, 0.1, 0.01}.
    AlphaSweep,
}

impl FromStr for AblatePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectrograms" => Ok(AblatePreset::Spectrograms),
            "concat" => Ok(AblatePreset::Concat),
            "raw_only" => Ok(AblatePreset::RawOnly),
            "power_only" => Ok(AblatePreset::PowerOnly),
            "no_decoders" => Ok(AblatePreset::NoDecoders),
            "alpha_sweep" => Ok(AblatePreset::AlphaSweep),
            other => Err(Error::Config(format!(
                "unknown ablation preset '{other}' (expected spectrograms|concat|raw_only|power_only|no_decoders|alpha_sweep)"
            ))),
        }
    }
}

/// The exact alpha values swept by [`AblatePreset::AlphaSweep`].
pub const ALPHA_SWEEP: [f64; 3] = [1.0, 0.1, 0.01];

/// Named config variants for a preset, derived from `base`.
pub fn preset_variants(preset: AblatePreset, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let with_mode = |mode: FusionMode| -> TrainConfig {
        let mut c = base.clone();
        c.model.fusion_mode = mode;
        c
    };
    match preset {
        AblatePreset::Spectrograms => vec![
            ("raw_only".into(), with_mode(FusionMode::RawOnly)),
            ("power_only".into(), with_mode(FusionMode::PowerOnly)),
            ("fused".into(), with_mode(FusionMode::Tsf)),
        ],
        AblatePreset::Concat => vec![
            ("concat".into(), with_mode(FusionMode::Concat)),
            ("tsf".into(), with_mode(FusionMode::Tsf)),
        ],
        AblatePreset::RawOnly => vec![
            ("raw_only".into(), with_mode(FusionMode::RawOnly)),
            ("fused".into(), with_mode(FusionMode::Tsf)),
        ],
        AblatePreset::PowerOnly => vec![
            ("power_only".into(), with_mode(FusionMode::PowerOnly)),
            ("fused".into(), with_mode(FusionMode::Tsf)),
        ],
        AblatePreset::NoDecoders => {
            let mut off = base.clone();
            off.model.decoders_enabled = false;
            let mut on = base.clone();
            on.model.decoders_enabled = true;
            vec![("no_decoders".into(), off), ("with_decoders".into(), on)]
        }
        AblatePreset::AlphaSweep => ALPHA_SWEEP
            .iter()
            .map(|&a| {
                let mut c = base.clone();
                c.alpha = a;
                (format!("alpha_{a}"), c)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblateRow {
    pub variant: String,
    /// Flat config keys this variant changes relative to the base.
    pub config_delta: Vec<String>,
    pub eer: f64,
    pub min_tdcf: f64,
    pub per_attack_eer: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblateReport {
    pub preset: AblatePreset,
    pub seed: u64,
    pub rows: Vec<AblateRow>,
    /// Soft-check note, e.g. when the fused variant trails both single
    /// branches. Advisory only.
    pub warning: Option<String>,
}

impl AblateReport {
    /// Aligned text rendering (one row per variant).
    pub fn table(&self) -> String {
        let mut out = String::from("variant            EER      min t-DCF\n");
        for r in &self.rows {
            out.push_str(&format!("{:<18} {:<8.4} {:<8.4}\n", r.variant, r.eer, r.min_tdcf));
        }
        out
    }
}

/// Train and evaluate every variant of `preset` under the base seed/budget.
pub fn ablate(
    preset: AblatePreset,
    base: &TrainConfig,
    train_manifest: &Manifest,
    dev_manifest: &Manifest,
    eval_manifest: &Manifest,
    tdcf: &TdcfParams,
    out_dir: &Path,
) -> Result<AblateReport> {
    let variants = preset_variants(preset, base);
    let mut rows = Vec::new();
    for (name, cfg) in &variants {
        let run_dir = out_dir.join(name);
        let report = train(cfg, train_manifest, dev_manifest, &run_dir)?;
        let eval_report = evaluate(
            &report.best_checkpoint,
            eval_manifest,
            tdcf,
            &run_dir.join("eval_scores.txt"),
        )?;
        eval_report.save(&run_dir.join("eval_report.json"))?;
        rows.push(AblateRow {
            variant: name.clone(),
            config_delta: config_diff(base, cfg),
            eer: eval_report.pooled_eer,
            min_tdcf: eval_report.pooled_min_tdcf,
            per_attack_eer: eval_report.per_attack_eer,
        });
    }
    let warning = soft_fusion_check(preset, &rows);
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let report = AblateReport { preset, seed: base.seed, rows, warning };
    let json = serde_json::to_string_pretty(&report).unwrap();
    crate::fsutil::write_atomic(&out_dir.join("ablate_report.json"), json.as_bytes())?;
    crate::fsutil::write_atomic(&out_dir.join("ablate_table.txt"), report.table().as_bytes())?;
    Ok(report)
}

/// Fused mode is expected (not required) to beat the worse single branch.
fn soft_fusion_check(preset: AblatePreset, rows: &[AblateRow]) -> Option<String> {
    if preset != AblatePreset::Spectrograms {
        return None;
    }
    let find = |v: &str| rows.iter().find(|r| r.variant == v).map(|r| r.eer);
    let (raw, power, fused) = (find("raw_only")?, find("power_only")?, find("fused")?);
    if fused > raw.max(power) {
        Some(format!(
            "fused EER {fused:.4} exceeds both single branches (raw {raw:.4}, power {power:.4})"
        ))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_sweep_runs_exactly_the_three_values() {
        let base = TrainConfig::tiny();
        let variants = preset_variants(AblatePreset::AlphaSweep, &base);
        let alphas: Vec<f64> = variants.iter().map(|(_, c)| c.alpha).collect();
        assert_eq!(alphas, vec![1.0, 0.1, 0.01]);
    }

    #[test]
    fn no_decoders_differs_by_exactly_one_key() {
        let base = TrainConfig::tiny();
        let variants = preset_variants(AblatePreset::NoDecoders, &base);
        let (_, off) = &variants[0];
        let diff = config_diff(&base, off);
        assert_eq!(diff, vec!["model.decoders_enabled".to_string()]);
        let (_, on) = &variants[1];
        assert!(config_diff(&base, on).is_empty());
    }

    #[test]
    fn spectrograms_preset_has_three_columns() {
        let base = TrainConfig::tiny();
        let names: Vec<String> = preset_variants(AblatePreset::Spectrograms, &base)
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, vec!["raw_only", "power_only", "fused"]);
    }

    #[test]
    fn soft_fusion_check_warns_only_when_fused_trails_both() {
        let row = |variant: &str, eer: f64| AblateRow {
            variant: variant.into(),
            config_delta: vec![],
            eer,
            min_tdcf: 0.1,
            per_attack_eer: Default::default(),
        };
        let good = vec![row("raw_only", 0.2), row("power_only", 0.3), row("fused", 0.25)];
        assert!(soft_fusion_check(AblatePreset::Spectrograms, &good).is_none());
        let bad = vec![row("raw_only", 0.2), row("power_only", 0.3), row("fused", 0.35)];
        assert!(soft_fusion_check(AblatePreset::Spectrograms, &bad).is_some());
        assert!(soft_fusion_check(AblatePreset::AlphaSweep, &bad).is_none());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!(AblatePreset::from_str("alpha_sweep").unwrap(), AblatePreset::AlphaSweep);
        assert!(AblatePreset::from_str("bogus").is_err());
    }
}
