//! Linear frequency cepstral coefficients.
//!
//! Per frame: Hamming window, power spectrum, linear-frequency triangular
//! filterbank, log, DCT-II. Delta and delta-delta rows are appended by
//! default so the default configuration yields 60 rows (20 + 20 + 20).

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{PowerSpectrogram, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfccConfig {
    /// Static cepstral coefficients per frame (including c0).
    pub n_ceps: usize,
    /// Triangular filters on the linear frequency axis.
    pub n_filters: usize,
    pub fft_size: usize,
    pub frame_ms: u32,
    pub hop_ms: u32,
    /// Append delta and delta-delta rows (n_ceps each).
    pub with_deltas: bool,
    /// Regression half-window for the delta computation.
    pub delta_window: usize,
    pub sample_rate: u32,
}

impl Default for LfccConfig {
    fn default() -> Self {
        LfccConfig {
            n_ceps: 20,
            n_filters: 40,
            fft_size: 512,
            frame_ms: 20,
            hop_ms: 10,
            with_deltas: true,
            delta_window: 2,
            sample_rate: 16000,
        }
    }
}

impl LfccConfig {
    pub fn frame_samples(&self) -> usize {
        (self.sample_rate as usize * self.frame_ms as usize) / 1000
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as usize * self.hop_ms as usize) / 1000
    }

    /// Rows in the output: n_ceps, tripled when deltas are on.
    pub fn feature_dim(&self) -> usize {
        if self.with_deltas {
            3 * self.n_ceps
        } else {
            self.n_ceps
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ceps == 0 || self.n_filters < self.n_ceps {
            return Err(Error::Config(format!(
                "lfcc needs 1 <= n_ceps <= n_filters, got {} and {}",
                self.n_ceps, self.n_filters
            )));
        }
        if self.fft_size < self.frame_samples() {
            return Err(Error::Config(format!(
                "lfcc fft_size {} is smaller than the frame ({} samples)",
                self.fft_size,
                self.frame_samples()
            )));
        }
        Ok(())
    }
}

/// Closed-form frame count: floor((len - frame)/hop) + 1.
pub fn lfcc_frame_count(len: usize, cfg: &LfccConfig) -> usize {
    assert!(len >= cfg.frame_samples(), "waveform shorter than one frame");
    (len - cfg.frame_samples()) / cfg.hop_samples() + 1
}

const LOG_FLOOR: f64 = 1e-10;

/// Extract LFCC features, (feature_dim x frames).
pub fn lfcc(w: &Waveform, cfg: &LfccConfig) -> Result<PowerSpectrogram> {
    cfg.validate()?;
    let frame_len = cfg.frame_samples();
    let hop = cfg.hop_samples();
    if w.len() < frame_len {
        return Err(Error::Input(format!(
            "waveform of {} samples is shorter than one {}ms frame",
            w.len(),
            cfg.frame_ms
        )));
    }
    let n_frames = lfcc_frame_count(w.len(), cfg);
    let n_bins = cfg.fft_size / 2 + 1;
    let window: Vec<f64> = (0..frame_len)
        .map(|n| {
            0.54 - 0.46
                * (2.0 * std::f64::consts::PI * n as f64 / (frame_len as f64 - 1.0)).cos()
        })
        .collect();
    let fbank = linear_filterbank(cfg.n_filters, n_bins, cfg.fft_size, cfg.sample_rate);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);

    let mut statics = Array2::zeros((cfg.n_ceps, n_frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for fi in 0..n_frames {
        for (n, slot) in buf.iter_mut().enumerate() {
            let v = if n < frame_len { w.samples[fi * hop + n] * window[n] } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        // filterbank energies -> log -> DCT-II (orthonormal)
        let mut loge = vec![0.0f64; cfg.n_filters];
        for (j, row) in fbank.rows().into_iter().enumerate() {
            let e: f64 = row.iter().zip(power.iter()).map(|(a, b)| a * b).sum();
            loge[j] = (e + LOG_FLOOR).ln();
        }
        for c in 0..cfg.n_ceps {
            let mut acc = 0.0;
            for (j, &v) in loge.iter().enumerate() {
                acc += v
                    * (std::f64::consts::PI * c as f64 * (2.0 * j as f64 + 1.0)
                        / (2.0 * cfg.n_filters as f64))
                        .cos();
            }
            let scale = if c == 0 {
                (1.0 / cfg.n_filters as f64).sqrt()
            } else {
                (2.0 / cfg.n_filters as f64).sqrt()
            };
            statics[[c, fi]] = acc * scale;
        }
    }

    let values = if cfg.with_deltas {
        let d1 = deltas(&statics, cfg.delta_window);
        let d2 = deltas(&d1, cfg.delta_window);
        let mut out = Array2::zeros((3 * cfg.n_ceps, n_frames));
        out.slice_mut(ndarray::s![0..cfg.n_ceps, ..]).assign(&statics);
        out.slice_mut(ndarray::s![cfg.n_ceps..2 * cfg.n_ceps, ..]).assign(&d1);
        out.slice_mut(ndarray::s![2 * cfg.n_ceps.., ..]).assign(&d2);
        out
    } else {
        statics
    };
    Ok(PowerSpectrogram { values, frame_ms: cfg.frame_ms, hop_ms: cfg.hop_ms })
}

/// Triangular filters with edges linearly spaced from 0 to Nyquist.
fn linear_filterbank(n_filters: usize, n_bins: usize, fft_size: usize, sr: u32) -> Array2<f64> {
    let nyquist = sr as f64 / 2.0;
    let edges: Vec<f64> =
        (0..n_filters + 2).map(|i| nyquist * i as f64 / (n_filters + 1) as f64).collect();
    let mut fb = Array2::zeros((n_filters, n_bins));
    for j in 0..n_filters {
        let (left, center, right) = (edges[j], edges[j + 1], edges[j + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sr as f64 / fft_size as f64;
            let wgt = if f >= left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f <= right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            fb[[j, k]] = wgt;
        }
    }
    fb
}

/// Regression deltas over +-`win` frames with edge replication.
fn deltas(x: &Array2<f64>, win: usize) -> Array2<f64> {
    let (rows, cols) = (x.nrows(), x.ncols());
    let denom: f64 = 2.0 * (1..=win).map(|k| (k * k) as f64).sum::<f64>();
    let mut d = Array2::zeros((rows, cols));
    for r in 0..rows {
        for t in 0..cols {
            let mut acc = 0.0;
            for k in 1..=win {
                let fwd = x[[r, (t + k).min(cols - 1)]];
                let bwd = x[[r, t.saturating_sub(k)]];
                acc += k as f64 * (fwd - bwd);
            }
            d[[r, t]] = acc / denom;
        }
    }
    d
}
