//! Multi-seed averaging: train + evaluate once per seed, then report the
//! mean and the parenthesized best of both metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::metrics::TdcfParams;

use super::{evaluate, train, EvalReport, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// None when this seed's run failed.
    pub report: Option<EvalReport>,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub per_seed: Vec<SeedOutcome>,
    pub mean_eer: Option<f64>,
    pub best_eer: Option<f64>,
    pub mean_min_tdcf: Option<f64>,
    pub best_min_tdcf: Option<f64>,
    /// True when at least one seed failed; metrics then cover the survivors.
    pub partial: bool,
}

impl MultiSeedReport {
    /// "mean(best)" rendering used by the comparison tables.
    pub fn summary_line(&self) -> String {
        match (self.mean_eer, self.best_eer, self.mean_min_tdcf, self.best_min_tdcf) {
            (Some(me), Some(be), Some(mt), Some(bt)) => {
                format!("EER {:.4}({:.4}) min t-DCF {:.4}({:.4})", me, be, mt, bt)
            }
            _ => "no successful runs".to_string(),
        }
    }
}

/// Train and evaluate once per seed. Evaluation uses the best-dev checkpoint
/// on `eval_manifest`. A failing seed is recorded and skipped rather than
/// aborting the sweep.
pub fn multi_seed(
    base: &TrainConfig,
    seeds: &[u64],
    train_manifest: &Manifest,
    dev_manifest: &Manifest,
    eval_manifest: &Manifest,
    tdcf: &TdcfParams,
    out_dir: &Path,
) -> Result<MultiSeedReport> {
    if seeds.is_empty() {
        return Err(Error::Config("multi-seed run needs at least one seed".into()));
    }
    let mut per_seed = Vec::new();
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let seed_dir = out_dir.join(format!("seed{seed}"));
        let outcome = (|| -> Result<EvalReport> {
            let report = train(&cfg, train_manifest, dev_manifest, &seed_dir)?;
            let eval_report = evaluate(
                &report.best_checkpoint,
                eval_manifest,
                tdcf,
                &seed_dir.join("eval_scores.txt"),
            )?;
            eval_report.save(&seed_dir.join("eval_report.json"))?;
            Ok(eval_report)
        })();
        match outcome {
            Ok(report) => per_seed.push(SeedOutcome {
                seed,
                report: Some(report),
                failed: false,
                error: None,
            }),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                per_seed.push(SeedOutcome {
                    seed,
                    report: None,
                    failed: true,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let ok: Vec<&EvalReport> = per_seed.iter().filter_map(|s| s.report.as_ref()).collect();
    let agg = |f: &dyn Fn(&EvalReport) -> f64| -> (Option<f64>, Option<f64>) {
        if ok.is_empty() {
            return (None, None);
        }
        let vals: Vec<f64> = ok.iter().map(|r| f(r)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        (Some(mean), Some(best))
    };
    let (mean_eer, best_eer) = agg(&|r| r.pooled_eer);
    let (mean_min_tdcf, best_min_tdcf) = agg(&|r| r.pooled_min_tdcf);
    let partial = per_seed.iter().any(|s| s.failed);
    let report = MultiSeedReport {
        per_seed,
        mean_eer,
        best_eer,
        mean_min_tdcf,
        best_min_tdcf,
        partial,
    };
    let json = serde_json::to_string_pretty(&report).unwrap();
    crate::fsutil::write_atomic(&out_dir.join("multiseed_report.json"), json.as_bytes())?;
    Ok(report)
}
