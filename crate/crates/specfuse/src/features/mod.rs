//! Waveform ingestion and the two input spectral representations.
//!
//! The network consumes an utterance through two views: a first-order "raw"
//! spectrogram produced by a learnable band-pass sinc filterbank applied to
//! the waveform, and a second-order power-based representation realized as
//! LFCC features. Both front-ends live here; the model module consumes their
//! outputs.

mod lfcc;
mod sinc;

pub use lfcc::{lfcc, lfcc_frame_count, LfccConfig};
pub use sinc::{SincFrontend, SincFrontendConfig, SincPostproc};

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::audio;
use crate::error::{Error, Result};

/// Sample rate every waveform is normalized to before feature extraction.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Default number of samples per utterance (~4 s at 16 kHz).
pub const DEFAULT_TARGET_LEN: usize = 64_600;

/// Fixed-length mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// First-order representation: sinc filterbank outputs, (filters x frames).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpectrogram {
    pub values: Array2<f64>,
}

impl RawSpectrogram {
    pub fn bin_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn frame_count(&self) -> usize {
        self.values.ncols()
    }
}

/// Second-order representation: LFCC features, (coefficients x frames).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub values: Array2<f64>,
    pub frame_ms: u32,
    pub hop_ms: u32,
}

impl PowerSpectrogram {
    pub fn coeff_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn frame_count(&self) -> usize {
        self.values.ncols()
    }
}

/// How to shorten clips that exceed the target length.
pub enum CropPolicy<'a> {
    /// Deterministic head crop (evaluation).
    Head,
    /// Uniform random offset drawn from the run's seeded RNG (training).
    Seeded(&'a mut ChaCha8Rng),
}

/// Load an audio file and normalize it to exactly `target_len` samples at
/// 16 kHz mono.
///
/// Shorter clips are tiled (`out[i] = in[i % len]`) and truncated; longer
/// clips are cropped per `crop`. Decoding failures and zero-length audio are
/// input errors.
pub fn load_waveform(path: &Path, target_len: usize, crop: CropPolicy) -> Result<Waveform> {
    let decoded = audio::read_audio(path)?;
    let samples = if decoded.sample_rate != TARGET_SAMPLE_RATE {
        audio::resample(&decoded.samples, decoded.sample_rate, TARGET_SAMPLE_RATE)
    } else {
        decoded.samples
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite samples in {}", path.display())));
    }
    Ok(Waveform {
        samples: fit_to_length(samples, target_len, crop),
        sample_rate: TARGET_SAMPLE_RATE,
    })
}

/// Tile-or-crop a sample buffer to `target_len` (the core of `load_waveform`).
pub fn fit_to_length(samples: Vec<f64>, target_len: usize, crop: CropPolicy) -> Vec<f64> {
    assert!(!samples.is_empty(), "fit_to_length on empty buffer");
    use std::cmp::Ordering;
    match samples.len().cmp(&target_len) {
        Ordering::Equal => samples,
        Ordering::Less => {
            let mut out = Vec::with_capacity(target_len);
            for i in 0..target_len {
                out.push(samples[i % samples.len()]);
            }
            out
        }
        Ordering::Greater => {
            let max_offset = samples.len() - target_len;
            let offset = match crop {
                CropPolicy::Head => 0,
                CropPolicy::Seeded(rng) => rng.random_range(0..=max_offset),
            };
            samples[offset..offset + target_len].to_vec()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_when_already_target_length() {
        let x: Vec<f64> = (0..64600).map(|i| (i as f64).sin() * 0.1).collect();
        let y = fit_to_length(x.clone(), 64600, CropPolicy::Head);
        assert_eq!(x, y);
    }

    #[test]
    fn short_input_tiles_then_truncates() {
        let x: Vec<f64> = (0..30000).map(|i| i as f64).collect();
        let y = fit_to_length(x.clone(), 64600, CropPolicy::Head);
        assert_eq!(y.len(), 64600);
        assert_eq!(&y[0..30000], &x[..]);
        assert_eq!(&y[30000..60000], &x[..]);
        assert_eq!(&y[60000..64600], &x[0..4600]);
    }

    #[test]
    fn long_input_head_crops_in_eval() {
        let x: Vec<f64> = (0..100000).map(|i| i as f64).collect();
        let y = fit_to_length(x.clone(), 64600, CropPolicy::Head);
        assert_eq!(&y[..], &x[0..64600]);
    }

    #[test]
    fn random_crop_is_seeded_and_in_bounds() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let mut rng1 = ChaCha8Rng::seed_from_u64(42);
        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let y1 = fit_to_length(x.clone(), 600, CropPolicy::Seeded(&mut rng1));
        let y2 = fit_to_length(x.clone(), 600, CropPolicy::Seeded(&mut rng2));
        assert_eq!(y1, y2);
        let offset = y1[0] as usize;
        assert!(offset <= 400);
        assert_eq!(y1[599] as usize, offset + 599);
    }

    #[test]
    fn load_waveform_errors_on_missing_file() {
        let err =
            load_waveform(Path::new("/no/such/file.wav"), 64600, CropPolicy::Head).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn load_waveform_idempotent_on_target_length_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let samples: Vec<f64> = (0..64600).map(|i| ((i % 37) as f64 / 37.0) - 0.5).collect();
        audio::write_wav_mono16(&path, &samples, 16000).unwrap();
        let w1 = load_waveform(&path, 64600, CropPolicy::Head).unwrap();
        let w2 = load_waveform(&path, 64600, CropPolicy::Head).unwrap();
        assert_eq!(w1.samples, w2.samples);
        assert_eq!(w1.len(), 64600);
    }
}
