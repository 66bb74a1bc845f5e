//! Audio file decoding (16-bit PCM WAV, FLAC), mono downmix, resampling,
//! and WAV output.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded audio: mono samples in [-1, 1] plus the file's sample rate.
#[derive(Debug)]
pub struct DecodedAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Decode a WAV or FLAC file (by extension) to mono f64 samples.
///
/// Multi-channel input is downmixed by averaging. Returns an input error for
/// unknown extensions, undecodable content, or zero-length audio.
pub fn read_audio(path: &Path) -> Result<DecodedAudio> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let decoded = match ext.as_str() {
        "wav" => read_wav(path)?,
        "flac" => read_flac(path)?,
        other => {
            return Err(Error::Input(format!(
                "unsupported audio extension '{other}' for {}",
                path.display()
            )))
        }
    };
    if decoded.samples.is_empty() {
        return Err(Error::Input(format!("zero-length audio: {}", path.display())));
    }
    Ok(decoded)
}

fn read_wav(path: &Path) -> Result<DecodedAudio> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?,
    };
    Ok(DecodedAudio { samples: downmix(&interleaved, channels), sample_rate: spec.sample_rate })
}

fn read_flac(path: &Path) -> Result<DecodedAudio> {
    let mut reader = claxon::FlacReader::open(path)
        .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?;
    let info = reader.streaminfo();
    let channels = info.channels as usize;
    let scale = 1.0 / (1i64 << (info.bits_per_sample - 1)) as f64;
    let mut interleaved = Vec::new();
    for s in reader.samples() {
        let v = s.map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?;
        interleaved.push(v as f64 * scale);
    }
    Ok(DecodedAudio { samples: downmix(&interleaved, channels), sample_rate: info.sample_rate })
}

fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect()
}

/// Linear-interpolation resampler. Adequate for rate conversion of speech
/// inputs into the toolkit; not meant as a mastering-quality SRC.
pub fn resample(samples: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = from_rate as f64 / to_rate as f64;
    let out_len = ((samples.len() as f64) / ratio).floor() as usize;
    let mut out = Vec::with_capacity(out_len.max(1));
    for i in 0..out_len.max(1) {
        let pos = i as f64 * ratio;
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let a = samples[i0.min(samples.len() - 1)];
        let b = samples[(i0 + 1).min(samples.len() - 1)];
        out.push(a + (b - a) * frac);
    }
    out
}

/// Write mono samples as 16-bit PCM WAV, clamping to [-1, 1].
pub fn write_wav_mono16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| Error::io(path, io_from(e)))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| Error::io(path, io_from(e)))?;
    }
    writer.finalize().map_err(|e| Error::io(path, io_from(e)))?;
    Ok(())
}

fn io_from(e: hound::Error) -> std::io::Error {
    match e {
        hound::Error::IoError(io) => io,
        other => std::io::Error::other(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..1000)
            .map(|i| (i as f64 * 0.05).sin() * 0.5)
            .collect();
        write_wav_mono16(&path, &samples, 16000).unwrap();
        let decoded = read_audio(&path).unwrap();
        assert_eq!(decoded.sample_rate, 16000);
        assert_eq!(decoded.samples.len(), 1000);
        for (a, b) in decoded.samples.iter().zip(samples.iter()) {
            assert!((a - b).abs() < 1.0 / 32000.0, "{a} vs {b}");
        }
    }

    #[test]
    fn downmix_averages_channels() {
        let stereo = vec![1.0, 0.0, 0.5, 0.5, -1.0, 1.0];
        assert_eq!(downmix(&stereo, 2), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn resample_halves_length() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y = resample(&x, 32000, 16000);
        assert_eq!(y.len(), 50);
        assert!((y[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_extension_is_input_error() {
        let err = read_audio(Path::new("/nonexistent/file.mp3")).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert_eq!(err.exit_code(), 1);
    }
}
