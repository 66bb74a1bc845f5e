//! Operator-facing command surface.
//!
//! Exit codes: 0 success, 1 input error, 2 config error, 3 internal error.
//! Every run that produces outputs writes the resolved configuration next to
//! them as `resolved.cfg`; re-running with `--config resolved.cfg` reproduces
//! the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::ArrayD;

use crate::data::{parse_protocol, partition_stats, synth_toy_dataset, Manifest, Partition, ToyConfig};
use crate::error::{Error, Result};
use crate::features::{lfcc, load_waveform, CropPolicy, SincFrontend};
use crate::fsutil;
use crate::gradcam::{grad_cam, save_saliency_png};
use crate::metrics::write_blind_scores;
use crate::nn::ParamStore;
use crate::tensorfile;
use crate::training::{
    ablate, evaluate, load_checkpoint, multi_seed, parse_run_config, render_run_config,
    score_manifest, train, AblatePreset, RunSpec,
};

const CONFIG_ENV: &str = "SPECFUSE_CONFIG";

#[derive(Parser)]
#[command(
    name = "specfuse",
    version,
    about = "Dual-spectrogram fusion toolkit for audio anti-spoofing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the seeded synthetic corpus (audio + protocol files).
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Bona fide utterances in train (spoof count matches).
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_dev: usize,
        #[arg(long, default_value_t = 100)]
        n_eval: usize,
        #[arg(long, default_value_t = 2)]
        attacks: usize,
    },
    /// Extract front-end features for a protocol into an array container.
    ExtractFeatures {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// raw | power | both
        #[arg(long, default_value = "both")]
        kind: String,
        /// Take feature configs (and trained sinc cutoffs) from a checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Train (one seed) or train+evaluate per seed when several are given.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Comma-separated seed list overriding the config.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Score a labeled protocol with a checkpoint and report EER/min t-DCF.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Emit `utt_id score` lines for audio files (no labels required).
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Audio files to score.
        #[arg(long = "audio", value_name = "FILE")]
        audio: Vec<PathBuf>,
        /// Alternatively, a protocol plus its audio root.
        #[arg(long)]
        protocol: Option<PathBuf>,
        #[arg(long)]
        audio_root: Option<PathBuf>,
    },
    /// Run an ablation preset and emit the comparison table.
    Ablate {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Saliency maps for one utterance (arrays + PNGs).
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a manifest: audio resolvability, durations, label consistency.
    CheckData {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse argv, dispatch, and map errors onto exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Merge config file (flag or env), then `--set` overrides.
fn resolve_config(
    config: Option<PathBuf>,
    sets: &[String],
) -> Result<(RunSpec, BTreeMap<String, String>)> {
    let path = config.or_else(|| std::env::var(CONFIG_ENV).ok().map(PathBuf::from));
    let mut map = match path {
        Some(p) => parse_run_config(&p)?,
        None => BTreeMap::new(),
    };
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got '{s}'"))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let spec = RunSpec::from_map(&map)?;
    Ok((spec, map))
}

fn write_snapshot(out_dir: &Path, map: &BTreeMap<String, String>) -> Result<()> {
    fsutil::write_atomic(&out_dir.join("resolved.cfg"), render_run_config(map).as_bytes())
}

fn manifest_from(spec_path: &Path, audio: &Path, partition: Partition) -> Result<Manifest> {
    Manifest::load(spec_path, audio, partition)
}

fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| Error::Config(format!("missing config key {key}")))
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::SynthData { out, seed, n_train, n_dev, n_eval, attacks } => {
            let cfg = ToyConfig { n_train, n_dev, n_eval, attacks };
            let ds = synth_toy_dataset(&cfg, seed, &out)?;
            let mut snapshot = BTreeMap::new();
            snapshot.insert("synth.seed".into(), seed.to_string());
            snapshot.insert("synth.n_train".into(), n_train.to_string());
            snapshot.insert("synth.n_dev".into(), n_dev.to_string());
            snapshot.insert("synth.n_eval".into(), n_eval.to_string());
            snapshot.insert("synth.attacks".into(), attacks.to_string());
            write_snapshot(&out, &snapshot)?;
            for (partition, proto) in &ds.protocols {
                let stats = partition_stats(&parse_protocol(proto)?);
                println!(
                    "{}: {} bona fide, {} spoof ({} attacks) -> {}",
                    partition.as_str(),
                    stats.n_bonafide,
                    stats.n_spoof,
                    stats.per_attack.len(),
                    proto.display()
                );
            }
            Ok(0)
        }

        Cmd::ExtractFeatures { protocol, audio, out, kind, checkpoint, config, sets } => {
            if !["raw", "power", "both"].contains(&kind.as_str()) {
                return Err(Error::Config(format!(
                    "--kind must be raw|power|both, got '{kind}'"
                )));
            }
            let (spec, map) = resolve_config(config, &sets)?;
            let manifest = manifest_from(&protocol, &audio, Partition::Eval)?;
            // use a checkpoint's front-end when given (trained cutoffs),
            // otherwise a fresh seeded front-end from the config
            let (feature_cfg, ps, sinc) = match checkpoint {
                Some(ck) => {
                    let (net, ps, _) = load_checkpoint(&ck)?;
                    (net.feature_cfg.clone(), ps, net.sinc.clone())
                }
                None => {
                    let mut ps = ParamStore::new();
                    let sinc = SincFrontend::new(
                        &mut ps,
                        "sinc",
                        spec.train.features.sinc.clone(),
                    )?;
                    (spec.train.features.clone(), ps, sinc)
                }
            };
            let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
            for entry in &manifest.entries {
                let path = manifest.audio_path(&entry.utt_id)?;
                let w = load_waveform(&path, feature_cfg.target_len, CropPolicy::Head)?;
                if kind == "raw" || kind == "both" {
                    let spec_out = sinc.extract(&ps, &w)?;
                    tensors.push((format!("{}.raw", entry.utt_id), spec_out.values.into_dyn()));
                }
                if kind == "power" || kind == "both" {
                    let feats = lfcc(&w, &feature_cfg.lfcc)?;
                    tensors.push((format!("{}.power", entry.utt_id), feats.values.into_dyn()));
                }
            }
            let meta = serde_json::json!({
                "format": "specfuse-features",
                "version": 1,
                "kind": kind,
                "target_len": feature_cfg.target_len,
            });
            tensorfile::write_container(&out, "specfuse-features", meta, &tensors)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                write_snapshot(dir, &map)?;
            }
            println!("wrote {} tensors to {}", tensors.len(), out.display());
            Ok(0)
        }

        Cmd::Train { out, config, sets, seeds } => {
            let mut sets = sets;
            if let Some(s) = &seeds {
                // fold the flag into the config map so the snapshot replays it
                sets.push(format!("train.seeds={s}"));
            }
            let (spec, map) = resolve_config(config, &sets)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_snapshot(&out, &map)?;
            let train_m = manifest_from(
                &require(&spec.data.train_protocol, "data.train_protocol")?,
                &require(&spec.data.train_audio, "data.train_audio")?,
                Partition::Train,
            )?;
            let dev_m = manifest_from(
                &require(&spec.data.dev_protocol, "data.dev_protocol")?,
                &require(&spec.data.dev_audio, "data.dev_audio")?,
                Partition::Dev,
            )?;
            if spec.seeds.len() <= 1 {
                let mut cfg = spec.train.clone();
                if let Some(&s) = spec.seeds.first() {
                    cfg.seed = s;
                }
                let report = train(&cfg, &train_m, &dev_m, &out)?;
                let json = serde_json::to_string_pretty(&report).unwrap();
                fsutil::write_atomic(&out.join("train_report.json"), json.as_bytes())?;
                println!(
                    "best dev EER {:.4} at epoch {} -> {}",
                    report.best_dev_eer,
                    report.best_epoch,
                    report.best_checkpoint.display()
                );
            } else {
                // evaluate each seed on the eval partition when present,
                // otherwise fall back to dev
                let eval_m = match (&spec.data.eval_protocol, &spec.data.eval_audio) {
                    (Some(p), Some(a)) => manifest_from(p, a, Partition::Eval)?,
                    _ => {
                        log::warn!("no eval partition configured; using dev for per-seed metrics");
                        dev_m.clone()
                    }
                };
                let report = multi_seed(
                    &spec.train,
                    &spec.seeds,
                    &train_m,
                    &dev_m,
                    &eval_m,
                    &spec.tdcf,
                    &out,
                )?;
                println!("{}", report.summary_line());
                if report.partial {
                    eprintln!("warning: some seeds failed; see multiseed_report.json");
                }
            }
            Ok(0)
        }

        Cmd::Evaluate { checkpoint, protocol, audio, out, config, sets } => {
            let (spec, map) = resolve_config(config, &sets)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_snapshot(&out, &map)?;
            let manifest = manifest_from(&protocol, &audio, Partition::Eval)?;
            let report = evaluate(&checkpoint, &manifest, &spec.tdcf, &out.join("scores.txt"))?;
            report.save(&out.join("eval_report.json"))?;
            println!(
                "pooled EER {:.4} (threshold {:.4}), min t-DCF {:.4}, {} trials",
                report.pooled_eer, report.eer_threshold, report.pooled_min_tdcf, report.n_trials
            );
            for (attack, eer) in &report.per_attack_eer {
                println!("  {attack}: EER {eer:.4}");
            }
            Ok(0)
        }

        Cmd::Score { checkpoint, out, audio, protocol, audio_root } => {
            match (protocol, audio_root) {
                (Some(p), Some(root)) => {
                    let manifest = manifest_from(&p, &root, Partition::Eval)?;
                    let records = score_manifest(&checkpoint, &manifest)?;
                    let blind: Vec<(String, f64)> =
                        records.into_iter().map(|r| (r.utt_id, r.score)).collect();
                    write_blind_scores(&out, &blind)?;
                    println!("scored {} utterances -> {}", blind.len(), out.display());
                    Ok(0)
                }
                (None, None) => {
                    if audio.is_empty() {
                        return Err(Error::Config(
                            "score needs --audio files or --protocol with --audio-root".into(),
                        ));
                    }
                    let (net, ps, _) = load_checkpoint(&checkpoint)?;
                    let mut scores = Vec::new();
                    let mut failures = Vec::new();
                    for path in &audio {
                        let utt = path
                            .file_stem()
                            .and_then(|s| s.to_str())
                            .unwrap_or("unknown")
                            .to_string();
                        match load_waveform(path, net.feature_cfg.target_len, CropPolicy::Head)
                            .and_then(|w| net.forward(&ps, &w))
                        {
                            Ok(o) => scores.push((utt, o.logit)),
                            Err(e) => {
                                eprintln!("warning: {}: {e}", path.display());
                                failures.push(format!("{} {e}", path.display()));
                            }
                        }
                    }
                    write_blind_scores(&out, &scores)?;
                    if !failures.is_empty() {
                        let err_path = out.with_extension("errors");
                        fsutil::write_atomic(&err_path, (failures.join("\n") + "\n").as_bytes())?;
                    }
                    if scores.is_empty() {
                        return Err(Error::Input("all inputs failed to score".into()));
                    }
                    println!(
                        "scored {} of {} inputs -> {}",
                        scores.len(),
                        scores.len() + failures.len(),
                        out.display()
                    );
                    Ok(0)
                }
                _ => Err(Error::Config(
                    "--protocol and --audio-root must be given together".into(),
                )),
            }
        }

        Cmd::Ablate { preset, out, config, sets } => {
            let preset: AblatePreset = preset.parse()?;
            let (spec, map) = resolve_config(config, &sets)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_snapshot(&out, &map)?;
            let train_m = manifest_from(
                &require(&spec.data.train_protocol, "data.train_protocol")?,
                &require(&spec.data.train_audio, "data.train_audio")?,
                Partition::Train,
            )?;
            let dev_m = manifest_from(
                &require(&spec.data.dev_protocol, "data.dev_protocol")?,
                &require(&spec.data.dev_audio, "data.dev_audio")?,
                Partition::Dev,
            )?;
            let eval_m = match (&spec.data.eval_protocol, &spec.data.eval_audio) {
                (Some(p), Some(a)) => manifest_from(p, a, Partition::Eval)?,
                _ => dev_m.clone(),
            };
            let report =
                ablate(preset, &spec.train, &train_m, &dev_m, &eval_m, &spec.tdcf, &out)?;
            print!("{}", report.table());
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }

        Cmd::Gradcam { checkpoint, audio, out } => {
            let (net, ps, _) = load_checkpoint(&checkpoint)?;
            let w = load_waveform(&audio, net.feature_cfg.target_len, CropPolicy::Head)?;
            let cam = grad_cam(&net, &ps, &w)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let utt = audio.file_stem().and_then(|s| s.to_str()).unwrap_or("utt").to_string();
            let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
            if let Some(raw) = &cam.raw {
                save_saliency_png(&out.join(format!("{utt}.raw_saliency.png")), raw)?;
                tensors.push(("raw".to_string(), raw.clone().into_dyn()));
            }
            if let Some(power) = &cam.power {
                save_saliency_png(&out.join(format!("{utt}.power_saliency.png")), power)?;
                tensors.push(("power".to_string(), power.clone().into_dyn()));
            }
            let meta = serde_json::json!({"format": "specfuse-saliency", "version": 1, "utt": utt});
            tensorfile::write_container(
                &out.join(format!("{utt}.saliency.sftc")),
                "specfuse-saliency",
                meta,
                &tensors,
            )?;
            println!("saliency written under {}", out.display());
            Ok(0)
        }

        Cmd::CheckData { protocol, audio, out } => {
            let manifest = manifest_from(&protocol, &audio, Partition::Eval)?;
            let mut findings: Vec<String> = Vec::new();
            let mut durations: Vec<f64> = Vec::new();
            for e in &manifest.entries {
                if !e.is_consistent() {
                    findings.push(format!(
                        "{}: key '{}' inconsistent with attack '{}' (bona fide iff attack is '-')",
                        e.utt_id, e.key, e.attack_id
                    ));
                }
                match manifest.audio_path(&e.utt_id) {
                    Ok(p) => match crate::audio::read_audio(&p) {
                        Ok(d) => durations.push(d.samples.len() as f64 / d.sample_rate as f64),
                        Err(err) => findings.push(format!("{}: {err}", e.utt_id)),
                    },
                    Err(err) => findings.push(format!("{}: {err}", e.utt_id)),
                }
            }
            let stats = manifest.stats();
            let dur_summary = if durations.is_empty() {
                serde_json::json!(null)
            } else {
                let n = durations.len() as f64;
                let mean = durations.iter().sum::<f64>() / n;
                let min = durations.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = durations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                serde_json::json!({"mean_s": mean, "min_s": min, "max_s": max})
            };
            let report = serde_json::json!({
                "protocol": protocol.display().to_string(),
                "n_bonafide": stats.n_bonafide,
                "n_spoof": stats.n_spoof,
                "attacks": stats.per_attack,
                "durations": dur_summary,
                "findings": findings,
            });
            let text = serde_json::to_string_pretty(&report).unwrap();
            if let Some(p) = out {
                fsutil::write_atomic(&p, text.as_bytes())?;
            }
            println!("{text}");
            println!(
                "{}",
                if findings.is_empty() {
                    "no issues found".to_string()
                } else {
                    format!("{} finding(s)", findings.len())
                }
            );
            Ok(0)
        }
    }
}
