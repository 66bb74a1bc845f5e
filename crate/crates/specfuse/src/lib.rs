//! Dual-spectrogram fusion toolkit for audio anti-spoofing.
//!
//! An utterance enters twice — as a learnable sinc-filterbank "raw"
//! spectrogram and as an LFCC power representation — and the two encoder
//! outputs are fused coarse-to-fine: channel concatenation plus convolution,
//! then a factored temporal/spectral attention whose product gates the fused
//! map. Twin deconvolutional decoders reconstruct both inputs from the gated
//! map so fusion cannot discard evidence, and a classifier head turns it
//! into a bona fide score. The crate wraps that model with protocol parsing,
//! a synthetic corpus, a deterministic `f64` training stack with
//! finite-difference-verified gradients, ASVspoof-style scoring (EER and
//! min t-DCF), ablation presets, and saliency maps.
//!
//! The `book/` directory holds the guide; its chapters are embedded in the
//! [`book`] module so every example in it runs under `cargo test`.
//!
//! ```
//! use specfuse::metrics::{compute_eer, Label, ScoreRecord};
//!
//! let trials = vec![
//!     ScoreRecord::new("bona-1", "-", Label::Bonafide, 2.4)?,
//!     ScoreRecord::new("bona-2", "-", Label::Bonafide, 1.1)?,
//!     ScoreRecord::new("spoof-1", "A01", Label::Spoof, -0.7)?,
//!     ScoreRecord::new("spoof-2", "A01", Label::Spoof, 0.3)?,
//! ];
//! let (eer, _threshold) = compute_eer(&trials)?;
//! assert_eq!(eer, 0.0);
//! # Ok::<(), specfuse::Error>(())
//! ```

pub mod audio;
pub mod book;
pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod fsutil;
pub mod gradcam;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensorfile;
pub mod training;

pub use error::{Error, Result};
pub use model::{ModelConfig, SpecFuseNet};
pub use training::TrainConfig;

/// Entry point used by the `specfuse` binary; returns the process exit code.
pub fn cli_main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    cli::run()
}
