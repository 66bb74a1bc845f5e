//! Reconstruction decoders: transposed-convolution stacks from the fused map
//! back to the spectrogram domains, with a final adaptive resize that pins
//! the output to the reconstruction target's exact shape.

use rand_chacha::ChaCha8Rng;

use crate::nn::{BatchNorm2d, ConvGeom, ConvTranspose2d, ParamStore, Tape, Var};

use super::config::DecoderConfig;

/// kernel/padding giving an exact per-axis upsampling factor.
fn geom_for_stride(s: (usize, usize)) -> ConvGeom {
    let per_axis = |s: usize| -> (usize, usize) {
        match s {
            1 => (3, 1), // same size
            2 => (4, 1), // 2x
            3 => (3, 0), // 3x
            4 => (4, 0), // 4x
            other => panic!("unsupported decoder stride {other}"),
        }
    };
    let (kh, ph) = per_axis(s.0);
    let (kw, pw) = per_axis(s.1);
    ConvGeom { kernel: (kh, kw), stride: s, pad: (ph, pw) }
}

pub struct Decoder {
    layers: Vec<(ConvTranspose2d, Option<BatchNorm2d>)>,
}

impl Decoder {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        cfg: &DecoderConfig,
    ) -> Self {
        let mut layers = Vec::new();
        let mut cin = in_channels;
        for (i, (&cout, &stride)) in cfg.channels.iter().zip(cfg.strides.iter()).enumerate() {
            let conv = ConvTranspose2d::new(
                ps,
                rng,
                &format!("{name}.deconv{i}"),
                cin,
                cout,
                geom_for_stride(stride).kernel,
                stride,
                geom_for_stride(stride).pad,
                true,
            );
            let last = i + 1 == cfg.channels.len();
            let bn = (!last).then(|| BatchNorm2d::new(ps, &format!("{name}.bn{i}"), cout));
            layers.push((conv, bn));
            cin = cout;
        }
        Decoder { layers }
    }

    /// (N, C, F, T) -> (N, 1, target_h, target_w).
    pub fn forward(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        h: Var,
        target_hw: (usize, usize),
        train: bool,
    ) -> Var {
        let mut x = h;
        for (conv, bn) in &self.layers {
            x = conv.forward(t, ps, x);
            if let Some(bn) = bn {
                x = bn.forward(t, ps, x, train);
                x = t.silu(x);
            }
        }
        t.adaptive_avg_pool2d(x, target_hw)
    }
}
