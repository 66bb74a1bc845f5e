//! Seeded synthetic corpus for desk-scale end-to-end runs.
//!
//! Bona fide utterances are harmonic-rich multi-tones with amplitude
//! modulation and a little noise. Two attack families provide complementary
//! cues: `A01` resynthesizes the harmonic stack band-limited below ~1.8 kHz
//! with a flattened envelope (a low-frequency tell), `A02` keeps the bona
//! fide structure but injects strong tones and hiss above 6 kHz (a
//! high-frequency tell). Everything derives from a fixed-algorithm RNG
//! keyed on (seed, partition, class, index), so regeneration is
//! byte-identical on any platform.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::write_wav_mono16;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::Label;

use super::{serialize_protocol, Manifest, Partition, ProtocolEntry};

pub const TOY_SAMPLE_RATE: u32 = 16_000;
pub const TOY_DURATION_SAMPLES: usize = 64_000; // 4 s

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Bona fide utterances in the training partition (spoof count matches).
    pub n_train: usize,
    pub n_dev: usize,
    pub n_eval: usize,
    /// Number of attack families (1 or 2).
    pub attacks: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { n_train: 200, n_dev: 100, n_eval: 100, attacks: 2 }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 || self.n_eval == 0 {
            return Err(Error::Config("toy partitions must be non-empty".into()));
        }
        if !(1..=2).contains(&self.attacks) {
            return Err(Error::Config("toy corpus supports 1 or 2 attack families".into()));
        }
        Ok(())
    }

    fn count(&self, p: Partition) -> usize {
        match p {
            Partition::Train => self.n_train,
            Partition::Dev => self.n_dev,
            Partition::Eval => self.n_eval,
        }
    }
}

/// Paths of a generated corpus.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub root: PathBuf,
    pub protocols: Vec<(Partition, PathBuf)>,
}

impl ToyDataset {
    pub fn manifest(&self, p: Partition) -> Result<Manifest> {
        let proto = self
            .protocols
            .iter()
            .find(|(part, _)| *part == p)
            .map(|(_, path)| path.clone())
            .ok_or_else(|| Error::Internal(format!("no protocol for {}", p.as_str())))?;
        Manifest::load(&proto, &self.root.join("audio").join(p.as_str()), p)
    }
}

/// Deterministic per-utterance RNG stream.
fn utt_rng(seed: u64, partition: Partition, class: u64, index: usize) -> ChaCha8Rng {
    // splitmix-style mixing keeps streams independent
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(partition as u64 + 1)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9)
        .wrapping_add(class)
        .wrapping_mul(0x94D0_49BB_1331_11EB)
        .wrapping_add(index as u64);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

fn bona_fide(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = TOY_SAMPLE_RATE as f64;
    let f0 = rng.random_range(120.0..260.0);
    let n_harm = ((7200.0 / f0) as usize).min(40);
    let am_freq = rng.random_range(3.0..8.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|k| {
            let amp = (k as f64).powf(-1.1) * rng.random_range(0.8..1.2);
            let phase = rng.random_range(0.0..2.0 * PI);
            (k as f64 * f0, amp, phase)
        })
        .collect();
    let mut out = vec![0.0f64; TOY_DURATION_SAMPLES];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let mut v = 0.0;
        for &(f, a, p) in &harmonics {
            v += a * (2.0 * PI * f * t + p).sin();
        }
        let am = 1.0 + 0.35 * (2.0 * PI * am_freq * t + am_phase).sin();
        *o = v * am + rng.random_range(-0.01..0.01);
    }
    normalize_peak(&mut out, 0.7);
    out
}

/// A01: band-limited resynthesis. Harmonics above ~1.8 kHz are dropped and
/// the envelope flattens; spectra differ from bona fide in the low band and
/// lack high-frequency content entirely.
fn attack_lowband(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = TOY_SAMPLE_RATE as f64;
    let f0 = rng.random_range(120.0..260.0);
    let n_harm = ((1800.0 / f0) as usize).max(1);
    let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|k| {
            let amp = (k as f64).powf(-0.3);
            let phase = rng.random_range(0.0..2.0 * PI);
            (k as f64 * f0, amp, phase)
        })
        .collect();
    let mut out = vec![0.0f64; TOY_DURATION_SAMPLES];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let mut v = 0.0;
        for &(f, a, p) in &harmonics {
            v += a * (2.0 * PI * f * t + p).sin();
        }
        *o = v + rng.random_range(-0.002..0.002);
    }
    normalize_peak(&mut out, 0.7);
    out
}

/// A02: high-frequency artifact injection on top of a bona-fide-like base.
fn attack_hf_artifact(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = TOY_SAMPLE_RATE as f64;
    let mut out = bona_fide(rng);
    let n_tones = rng.random_range(2..=3);
    let tones: Vec<(f64, f64)> = (0..n_tones)
        .map(|_| (rng.random_range(6400.0..7600.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let hiss_carrier = rng.random_range(6000.0..7000.0);
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let mut v = 0.0;
        for &(f, p) in &tones {
            v += 0.12 * (2.0 * PI * f * t + p).sin();
        }
        let hiss = rng.random_range(-0.06..0.06) * (2.0 * PI * hiss_carrier * t).sin();
        *o += v + hiss;
    }
    normalize_peak(&mut out, 0.7);
    out
}

fn normalize_peak(samples: &mut [f64], peak: f64) {
    let m = samples.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if m > 0.0 {
        let k = peak / m;
        for s in samples.iter_mut() {
            *s *= k;
        }
    }
}

const ATTACK_IDS: [&str; 2] = ["A01", "A02"];

/// Generate audio and protocol files under `out_dir`. Deterministic given
/// `seed`: rerunning produces byte-identical files.
pub fn synth_toy_dataset(cfg: &ToyConfig, seed: u64, out_dir: &Path) -> Result<ToyDataset> {
    cfg.validate()?;
    let mut protocols = Vec::new();
    for partition in Partition::ALL {
        let n = cfg.count(partition);
        let audio_dir = out_dir.join("audio").join(partition.as_str());
        std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

        // plan all utterances, then render in parallel (each has its own
        // seeded stream, so ordering cannot affect the bytes)
        struct Plan {
            utt: String,
            speaker: String,
            attack: &'static str,
            key: Label,
            class: u64,
            index: usize,
        }
        let mut plans = Vec::new();
        for i in 0..n {
            plans.push(Plan {
                utt: format!("T_{}_B{:05}", partition.as_str().to_uppercase(), i),
                speaker: format!("SPK{:03}", i % 10),
                attack: "-",
                key: Label::Bonafide,
                class: 0,
                index: i,
            });
        }
        for i in 0..n {
            let a = i % cfg.attacks;
            plans.push(Plan {
                utt: format!("T_{}_S{:05}", partition.as_str().to_uppercase(), i),
                speaker: format!("SPK{:03}", (i + 5) % 10),
                attack: ATTACK_IDS[a],
                key: Label::Spoof,
                class: 1 + a as u64,
                index: i,
            });
        }

        plans
            .par_iter()
            .map(|p| -> Result<()> {
                let mut rng = utt_rng(seed, partition, p.class, p.index);
                let samples = match (p.key, p.attack) {
                    (Label::Bonafide, _) => bona_fide(&mut rng),
                    (Label::Spoof, "A01") => attack_lowband(&mut rng),
                    (Label::Spoof, _) => attack_hf_artifact(&mut rng),
                };
                write_wav_mono16(&audio_dir.join(format!("{}.wav", p.utt)), &samples, TOY_SAMPLE_RATE)
            })
            .collect::<Result<Vec<()>>>()?;

        let entries: Vec<ProtocolEntry> = plans
            .iter()
            .map(|p| ProtocolEntry {
                speaker_id: p.speaker.clone(),
                utt_id: p.utt.clone(),
                system_id: "-".to_string(),
                attack_id: p.attack.to_string(),
                key: p.key,
            })
            .collect();
        let proto_path =
            out_dir.join("protocols").join(format!("toy.cm.{}.txt", partition.as_str()));
        fsutil::write_atomic(&proto_path, serialize_protocol(&entries).as_bytes())?;
        protocols.push((partition, proto_path));
    }
    Ok(ToyDataset { root: out_dir.to_path_buf(), protocols })
}
