//! Optimization loop, evaluation runs, multi-seed orchestration, and
//! ablation presets.

mod ablate;
mod checkpoint;
mod evaluate;
mod multiseed;
mod runconfig;

pub use ablate::{ablate, preset_variants, AblatePreset, AblateReport, AblateRow, ALPHA_SWEEP};
pub use checkpoint::{
    file_fingerprint, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_KIND,
};
pub use evaluate::{evaluate, score_manifest, EvalReport};
pub use multiseed::{multi_seed, MultiSeedReport, SeedOutcome};
pub use runconfig::{config_diff, parse_run_config, render_run_config, RunSpec};

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::features::{load_waveform, CropPolicy, Waveform};
use crate::losses::{
    recon_loss_op, total_loss, total_loss_op, wbce_logits_op, LossBreakdown, ReconNorm,
    WbceWeights,
};
use crate::metrics::Label;
use crate::model::{BatchInput, FeatureConfig, ModelConfig, SpecFuseNet};
use crate::nn::{Adam, CosineSchedule, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam initial learning rate; cosine-annealed to `lr_floor`.
    pub lr: f64,
    pub lr_floor: f64,
    /// Weight of the reconstruction losses in the total objective.
    pub alpha: f64,
    pub recon_norm: ReconNorm,
    /// None: inverse class frequency of the training partition.
    pub wbce_weights: Option<WbceWeights>,
    pub seed: u64,
    pub model: ModelConfig,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 48,
            lr: 3e-4,
            lr_floor: 1e-6,
            alpha: 0.1,
            recon_norm: ReconNorm::MeanAbs,
            wbce_weights: None,
            seed: 1,
            model: ModelConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Desk-scale settings for the synthetic corpus.
    pub fn tiny() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            model: ModelConfig::tiny(),
            features: FeatureConfig::tiny(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr_floor >= 0.0 && self.lr_floor <= self.lr) {
            return Err(Error::Config(format!(
                "need 0 < lr and 0 <= lr_floor <= lr, got {} and {}",
                self.lr, self.lr_floor
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        self.model.validate()?;
        self.features.sinc.validate()?;
        self.features.lfcc.validate()
    }
}

/// One optimization step's log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_total: f64,
    pub mean_recon_raw: f64,
    pub mean_recon_power: f64,
    pub mean_cls: f64,
    pub dev_eer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_eer: f64,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

/// Per-utterance RNG for the training-time random crop, independent of
/// loader scheduling.
fn crop_rng(seed: u64, epoch: usize, utt_index: usize) -> ChaCha8Rng {
    let mut z = seed
        .wrapping_mul(0xA076_1D64_78BD_642F)
        .wrapping_add(epoch as u64 + 1)
        .wrapping_mul(0xE703_7ED1_A0B4_28DB)
        .wrapping_add(utt_index as u64);
    z ^= z >> 32;
    ChaCha8Rng::seed_from_u64(z)
}

struct LoadedBatch {
    waves: Vec<Waveform>,
    labels: Vec<f64>,
}

fn load_batch(
    manifest: &Manifest,
    indices: &[usize],
    target_len: usize,
    seed: u64,
    epoch: usize,
) -> Result<LoadedBatch> {
    let mut waves = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let entry = &manifest.entries[i];
        let path = manifest.audio_path(&entry.utt_id)?;
        let mut rng = crop_rng(seed, epoch, i);
        let w = load_waveform(&path, target_len, CropPolicy::Seeded(&mut rng))?;
        waves.push(w);
        labels.push(if entry.key == Label::Bonafide { 1.0 } else { 0.0 });
    }
    Ok(LoadedBatch { waves, labels })
}

/// Run the optimization loop; persists the best-dev checkpoint (pooled dev
/// EER, ties resolved to the earlier epoch) plus the final-epoch checkpoint,
/// and streams per-step loss records to `metrics.jsonl` in `out_dir`.
pub fn train(
    cfg: &TrainConfig,
    train_manifest: &Manifest,
    dev_manifest: &Manifest,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let stats = train_manifest.stats();
    if stats.n_bonafide == 0 || stats.n_spoof == 0 {
        return Err(Error::Config(format!(
            "training partition needs both classes (got {} bona fide, {} spoof)",
            stats.n_bonafide, stats.n_spoof
        )));
    }
    let weights = cfg
        .wbce_weights
        .unwrap_or_else(|| WbceWeights::inverse_frequency(stats.n_bonafide, stats.n_spoof));

    let mut ps = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = SpecFuseNet::new(&mut ps, &mut init_rng, cfg.model.clone(), cfg.features.clone())?;
    let mut opt = Adam::new();
    let schedule = CosineSchedule { lr0: cfg.lr, floor: cfg.lr_floor, epochs: cfg.epochs };

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = std::io::BufWriter::new(
        std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?,
    );

    let mut steps: Vec<StepLog> = Vec::new();
    let mut epochs: Vec<EpochLog> = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        let mut order: Vec<usize> = (0..train_manifest.entries.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_losses: Vec<LossBreakdown> = Vec::new();

        for chunk in order.chunks(cfg.batch_size) {
            let batch = load_batch(train_manifest, chunk, cfg.features.target_len, cfg.seed, epoch)?;
            let input = net.prepare_input(&batch.waves)?;
            let breakdown = match train_step(
                &net, &mut ps, &mut opt, &input, &batch.labels, weights, cfg, lr,
            ) {
                Ok(b) => b,
                Err(e) => {
                    // diagnostic dump before aborting
                    let dump = serde_json::json!({
                        "error": e.to_string(),
                        "step": global_step,
                        "epoch": epoch,
                        "lr": lr,
                        "batch_utts": chunk.iter()
                            .map(|&i| train_manifest.entries[i].utt_id.clone())
                            .collect::<Vec<_>>(),
                    });
                    let dump_path = out_dir.join("abort_diagnostics.json");
                    let _ = crate::fsutil::write_atomic(
                        &dump_path,
                        serde_json::to_string_pretty(&dump).unwrap().as_bytes(),
                    );
                    return Err(e);
                }
            };
            let log = StepLog { step: global_step, epoch, lr, loss: breakdown };
            writeln!(metrics_file, "{}", serde_json::to_string(&log).unwrap())
                .map_err(|e| Error::io(&metrics_path, e))?;
            steps.push(log);
            epoch_losses.push(breakdown);
            global_step += 1;
        }
        metrics_file.flush().map_err(|e| Error::io(&metrics_path, e))?;

        let dev = evaluate::score_with_net(&net, &ps, dev_manifest)?;
        let (dev_eer, _) = crate::metrics::compute_eer(&dev)?;
        let n = epoch_losses.len().max(1) as f64;
        let mean = |f: &dyn Fn(&LossBreakdown) -> f64| {
            epoch_losses.iter().map(|b| f(b)).sum::<f64>() / n
        };
        let elog = EpochLog {
            epoch,
            lr,
            mean_total: mean(&|b| b.total),
            mean_recon_raw: mean(&|b| b.l_recon_raw),
            mean_recon_power: mean(&|b| b.l_recon_power),
            mean_cls: mean(&|b| b.l_cls),
            dev_eer,
        };
        writeln!(metrics_file, "{}", serde_json::to_string(&elog).unwrap())
            .map_err(|e| Error::io(&metrics_path, e))?;
        metrics_file.flush().map_err(|e| Error::io(&metrics_path, e))?;
        epochs.push(elog);

        if best.map(|(_, e)| dev_eer < e).unwrap_or(true) {
            best = Some((epoch, dev_eer));
            let meta = CheckpointMeta { seed: cfg.seed, epoch, dev_eer: Some(dev_eer) };
            save_checkpoint(&best_path, &net, &ps, &meta)?;
        }
        log::info!(
            "epoch {epoch}: lr {lr:.3e} mean total {:.5} dev EER {:.4}",
            epochs.last().unwrap().mean_total,
            dev_eer
        );
    }

    let (best_epoch, best_dev_eer) = best.expect("at least one epoch");
    let meta = CheckpointMeta {
        seed: cfg.seed,
        epoch: cfg.epochs - 1,
        dev_eer: epochs.last().map(|e| e.dev_eer),
    };
    save_checkpoint(&last_path, &net, &ps, &meta)?;
    Ok(TrainReport {
        steps,
        epochs,
        best_epoch,
        best_dev_eer,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
    })
}

/// One forward/backward/update step; returns the loss breakdown.
#[allow(clippy::too_many_arguments)]
fn train_step(
    net: &SpecFuseNet,
    ps: &mut ParamStore,
    opt: &mut Adam,
    input: &BatchInput,
    labels: &[f64],
    weights: WbceWeights,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    let mut t = Tape::recording();
    let out = net.forward_batch(&mut t, ps, input, true)?;

    let labels_arr =
        ArrayD::from_shape_vec(IxDyn(&[labels.len(), 1]), labels.to_vec()).unwrap();
    let lcls = wbce_logits_op(&mut t, out.logits, &labels_arr, weights);

    let l1 = match (out.recon_raw, out.x_raw) {
        (Some(recon), Some(target)) => {
            let s = t.value(target).shape().to_vec();
            let recon3 = t.reshape(recon, &s);
            recon_loss_op(&mut t, recon3, target, cfg.recon_norm)
        }
        _ => t.constant(ArrayD::zeros(IxDyn(&[]))),
    };
    let l2 = match (out.recon_power, out.x_power) {
        (Some(recon), Some(target)) => recon_loss_op(&mut t, recon, target, cfg.recon_norm),
        _ => t.constant(ArrayD::zeros(IxDyn(&[]))),
    };
    let total = total_loss_op(&mut t, l1, l2, lcls, cfg.alpha);

    // validate the components (aborts on non-finite values)
    let breakdown = total_loss(t.value(l1)[[]], t.value(l2)[[]], t.value(lcls)[[]], cfg.alpha)?;
    debug_assert!((breakdown.total - t.value(total)[[]]).abs() < 1e-9);

    let grads = t.backward(total);
    opt.step(ps, &t, &grads, lr);
    for (id, v) in t.stat_updates.drain(..) {
        ps.set_value(id, v);
    }
    Ok(breakdown)
}
