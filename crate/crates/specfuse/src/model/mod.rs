//! The fusion network: two spectrogram encoders onto a shared feature-map
//! space, coarse channel fusion, temporal-spectral attention, twin
//! reconstruction decoders, and a classifier head.

mod classifier;
mod config;
mod decoder;
mod encoder;
mod tsf;

pub use config::{
    BlockConfig, ClassifierConfig, CommonDims, DecoderConfig, EncoderConfig, FeatureConfig,
    FusionMode, ModelConfig,
};
pub use tsf::{apply_attention, tsf_pool};

use ndarray::{Array2, Array3, Array4, ArrayD, Axis, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{lfcc, PowerSpectrogram, RawSpectrogram, SincFrontend, Waveform};
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Tape, Var};

use classifier::Classifier;
use decoder::Decoder;
use encoder::ResidualEncoder;
use tsf::TsfModule;

/// Rank-3 feature map (C channels x F spectral bins x T frames).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Array3<f64>,
}

impl FeatureMap {
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Factored attention: spectral (C,F,1), temporal (C,1,T), and their
/// broadcast product (C,F,T). All entries lie in the open interval (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub spectral: Array3<f64>,
    pub temporal: Array3<f64>,
    pub combined: Array3<f64>,
}

impl AttentionMap {
    /// Check the structural invariants: sigmoid range and the product rule.
    pub fn validate(&self) -> Result<()> {
        let in_range = |a: &Array3<f64>| a.iter().all(|&v| v > 0.0 && v < 1.0);
        if !in_range(&self.spectral) || !in_range(&self.temporal) {
            return Err(Error::Contract("attention entries must lie in (0,1)".into()));
        }
        let (c, f, _) = {
            let s = self.spectral.shape();
            (s[0], s[1], s[2])
        };
        let t = self.temporal.shape()[2];
        if self.combined.shape() != [c, f, t] {
            return Err(Error::Contract("combined attention has wrong dims".into()));
        }
        for ic in 0..c {
            for fi in 0..f {
                for ti in 0..t {
                    let expect = self.spectral[[ic, fi, 0]] * self.temporal[[ic, 0, ti]];
                    if (self.combined[[ic, fi, ti]] - expect).abs() > 1e-12 {
                        return Err(Error::Contract(
                            "combined attention is not the broadcast product".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inference output for one utterance.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// Bona fide score; higher means more bona fide. sigmoid(logit) is the
    /// bona fide probability.
    pub logit: f64,
    pub recon_raw: Option<RawSpectrogram>,
    pub recon_power: Option<PowerSpectrogram>,
    /// The attentive fused representation fed to the classifier.
    pub fused: FeatureMap,
}

/// Batched network inputs: waveforms (N, L) and, unless running raw-only,
/// the power-branch features (N, 1, D, T_p).
pub struct BatchInput {
    pub waves: Array2<f64>,
    pub power: Option<Array4<f64>>,
}

/// Tape handles produced by one batched pass.
pub struct BatchOutput {
    pub logits: Var,
    /// Sinc front-end output (N, F0, T0); the raw reconstruction target.
    pub x_raw: Option<Var>,
    pub recon_raw: Option<Var>,
    /// Power features as a tape constant (N, 1, D, T_p).
    pub x_power: Option<Var>,
    pub recon_power: Option<Var>,
    /// Coarse fused map before attention, when both branches run.
    pub h_fused: Option<Var>,
    /// (spectral, temporal, combined) attention, in tsf mode.
    pub attention: Option<(Var, Var, Var)>,
    /// Representation fed to the classifier.
    pub h_attentive: Var,
    /// Final-block activations, saliency hook points.
    pub raw_hook: Option<Var>,
    pub power_hook: Option<Var>,
}

pub struct SpecFuseNet {
    pub cfg: ModelConfig,
    pub feature_cfg: FeatureConfig,
    pub sinc: SincFrontend,
    raw_encoder: ResidualEncoder,
    power_encoder: ResidualEncoder,
    fuse_conv: Conv2d,
    fuse_bn: BatchNorm2d,
    tsf: TsfModule,
    raw_decoder: Decoder,
    power_decoder: Decoder,
    classifier: Classifier,
}

impl SpecFuseNet {
    /// Register all parameters into `ps` and build the network. Every
    /// component exists regardless of fusion mode, so ablation variants
    /// differ only in configuration.
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        cfg: ModelConfig,
        feature_cfg: FeatureConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let dims = cfg.common_dims;
        let sinc = SincFrontend::new(ps, "sinc", feature_cfg.sinc.clone())?;
        let raw_encoder = ResidualEncoder::new(ps, rng, "raw_enc", &cfg.raw_encoder, dims);
        let power_encoder = ResidualEncoder::new(ps, rng, "power_enc", &cfg.power_encoder, dims);
        let fuse_conv =
            Conv2d::new(ps, rng, "fuse.conv", 2 * dims.c, dims.c, (3, 3), (1, 1), (1, 1), true);
        let fuse_bn = BatchNorm2d::new(ps, "fuse.bn", dims.c);
        let tsf = TsfModule::new(ps, rng, "tsf", dims.c, cfg.attention_hidden);
        let raw_decoder = Decoder::new(ps, rng, "raw_dec", dims.c, &cfg.raw_decoder);
        let power_decoder = Decoder::new(ps, rng, "power_dec", dims.c, &cfg.power_decoder);
        let classifier = Classifier::new(ps, rng, "cls", dims.c, &cfg.classifier);
        Ok(SpecFuseNet {
            cfg,
            feature_cfg,
            sinc,
            raw_encoder,
            power_encoder,
            fuse_conv,
            fuse_bn,
            tsf,
            raw_decoder,
            power_decoder,
            classifier,
        })
    }

    fn fuse(&self, t: &mut Tape, ps: &ParamStore, h1: Var, h2: Var, train: bool) -> Var {
        let cat = t.concat(1, h1, h2);
        let h = self.fuse_conv.forward(t, ps, cat);
        let h = self.fuse_bn.forward(t, ps, h, train);
        t.silu(h)
    }

    /// Full batched pass. The power features must be supplied unless the
    /// fusion mode is raw-only.
    pub fn forward_batch(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        input: &BatchInput,
        train: bool,
    ) -> Result<BatchOutput> {
        let n = input.waves.nrows();
        let mode = self.cfg.fusion_mode;

        let mut x_raw = None;
        let mut raw_pair = None;
        if mode != FusionMode::PowerOnly {
            if input.waves.ncols() < self.feature_cfg.sinc.kernel_len {
                return Err(Error::Input(format!(
                    "waveform of {} samples is shorter than the sinc kernel",
                    input.waves.ncols()
                )));
            }
            let x1 = self.sinc.forward(t, ps, &input.waves);
            let (f0, t0) = {
                let s = t.value(x1).shape();
                (s[1], s[2])
            };
            let img = t.reshape(x1, &[n, 1, f0, t0]);
            raw_pair = Some(self.raw_encoder.forward_with_hook(t, ps, img, train));
            x_raw = Some(x1);
        }

        let mut x_power = None;
        let mut power_pair = None;
        if mode != FusionMode::RawOnly {
            let power = input.power.as_ref().ok_or_else(|| {
                Error::Contract(format!("fusion mode {} needs power features", mode.as_str()))
            })?;
            if power.shape()[0] != n {
                return Err(Error::Contract("power batch size mismatch".into()));
            }
            let x2 = t.constant(power.clone().into_dyn());
            power_pair = Some(self.power_encoder.forward_with_hook(t, ps, x2, train));
            x_power = Some(x2);
        }

        let mut h_fused = None;
        let mut attention = None;
        let h_attentive = match mode {
            FusionMode::RawOnly => raw_pair.as_ref().unwrap().0,
            FusionMode::PowerOnly => power_pair.as_ref().unwrap().0,
            FusionMode::Concat => {
                let hf =
                    self.fuse(t, ps, raw_pair.as_ref().unwrap().0, power_pair.as_ref().unwrap().0, train);
                h_fused = Some(hf);
                hf
            }
            FusionMode::Tsf => {
                let hf =
                    self.fuse(t, ps, raw_pair.as_ref().unwrap().0, power_pair.as_ref().unwrap().0, train);
                h_fused = Some(hf);
                let (s_ctx, t_ctx) = self.tsf.pool(t, hf);
                let (a_s, a_t) = self.tsf.attention(t, ps, s_ctx, t_ctx, train);
                let (combined, gated) = self.tsf.gate(t, a_s, a_t, hf);
                attention = Some((a_s, a_t, combined));
                gated
            }
        };

        let decoders_active = self.cfg.decoders_enabled
            && matches!(mode, FusionMode::Tsf | FusionMode::Concat);
        let mut recon_raw = None;
        let mut recon_power = None;
        if decoders_active {
            if let Some(x1) = x_raw {
                let s = t.value(x1).shape().to_vec();
                recon_raw =
                    Some(self.raw_decoder.forward(t, ps, h_attentive, (s[1], s[2]), train));
            }
            if let Some(x2) = x_power {
                let s = t.value(x2).shape().to_vec();
                recon_power =
                    Some(self.power_decoder.forward(t, ps, h_attentive, (s[2], s[3]), train));
            }
        }

        let logits = self.classifier.forward(t, ps, h_attentive);
        Ok(BatchOutput {
            logits,
            x_raw,
            recon_raw,
            x_power,
            recon_power,
            h_fused,
            attention,
            h_attentive,
            raw_hook: raw_pair.map(|p| p.1),
            power_hook: power_pair.map(|p| p.1),
        })
    }

    // ---- single-utterance operations (inference tapes) ----

    /// Encode a raw spectrogram to the common feature-map space.
    pub fn encode_raw(&self, ps: &ParamStore, x: &RawSpectrogram) -> Result<FeatureMap> {
        if x.bin_count() != self.feature_cfg.sinc.n_filters {
            return Err(Error::Config(format!(
                "raw spectrogram has {} bins, front-end config says {}",
                x.bin_count(),
                self.feature_cfg.sinc.n_filters
            )));
        }
        let mut t = Tape::inference();
        let img = to_nchw(&mut t, &x.values);
        let h = self.raw_encoder.forward(&mut t, ps, img, false);
        Ok(first_sample(t.value(h)))
    }

    /// Encode a power spectrogram to the common feature-map space.
    pub fn encode_power(&self, ps: &ParamStore, x: &PowerSpectrogram) -> Result<FeatureMap> {
        if x.coeff_count() != self.feature_cfg.lfcc.feature_dim() {
            return Err(Error::Config(format!(
                "power spectrogram has {} rows, feature config says {}",
                x.coeff_count(),
                self.feature_cfg.lfcc.feature_dim()
            )));
        }
        let mut t = Tape::inference();
        let img = to_nchw(&mut t, &x.values);
        let h = self.power_encoder.forward(&mut t, ps, img, false);
        Ok(first_sample(t.value(h)))
    }

    /// Channel-concatenate two equal-dim maps and convolve back to C channels.
    pub fn coarse_fuse(&self, ps: &ParamStore, h1: &FeatureMap, h2: &FeatureMap) -> Result<FeatureMap> {
        if h1.dims() != h2.dims() {
            return Err(Error::Contract(format!(
                "coarse fusion needs equal dims, got {:?} and {:?}",
                h1.dims(),
                h2.dims()
            )));
        }
        let mut t = Tape::inference();
        let a = feature_const(&mut t, h1);
        let b = feature_const(&mut t, h2);
        let fused = self.fuse(&mut t, ps, a, b, false);
        Ok(first_sample(t.value(fused)))
    }

    /// Attention maps from pooled contexts (C,F,1) and (C,1,T).
    pub fn tsf_attention(
        &self,
        ps: &ParamStore,
        spectral_ctx: &Array3<f64>,
        temporal_ctx: &Array3<f64>,
    ) -> Result<AttentionMap> {
        let (c, f, one) = dim3(spectral_ctx);
        let (c2, one2, tt) = dim3(temporal_ctx);
        if c != c2 || one != 1 || one2 != 1 {
            return Err(Error::Contract(
                "contexts must be (C,F,1) and (C,1,T) with matching C".into(),
            ));
        }
        let mut t = Tape::inference();
        let s = array3_const(&mut t, spectral_ctx);
        let tc = array3_const(&mut t, temporal_ctx);
        let (a_s, a_t) = self.tsf.attention(&mut t, ps, s, tc, false);
        let combined = t.mul(a_s, a_t);
        Ok(AttentionMap {
            spectral: first_sample(t.value(a_s)).values,
            temporal: first_sample(t.value(a_t)).values,
            combined: first_sample(t.value(combined)).values,
        })
        .and_then(|a| {
            debug_assert_eq!(a.combined.shape(), [c, f, tt]);
            Ok(a)
        })
    }

    /// Decode the fused map back to the raw-spectrogram domain at the shape
    /// implied by the front-end configuration.
    pub fn decode_raw(&self, ps: &ParamStore, h: &FeatureMap) -> Result<RawSpectrogram> {
        let target = (
            self.feature_cfg.sinc.n_filters,
            self.feature_cfg.sinc.frame_count(self.feature_cfg.target_len),
        );
        self.decode_raw_to(ps, h, target)
    }

    pub fn decode_raw_to(
        &self,
        ps: &ParamStore,
        h: &FeatureMap,
        target: (usize, usize),
    ) -> Result<RawSpectrogram> {
        self.check_common_dims(h)?;
        let mut t = Tape::inference();
        let hv = feature_const(&mut t, h);
        let y = self.raw_decoder.forward(&mut t, ps, hv, target, false);
        Ok(RawSpectrogram { values: plane_of(t.value(y)) })
    }

    /// Decode the fused map back to the power-spectrogram domain.
    pub fn decode_power(&self, ps: &ParamStore, h: &FeatureMap) -> Result<PowerSpectrogram> {
        let cfg = &self.feature_cfg.lfcc;
        let target = (
            cfg.feature_dim(),
            crate::features::lfcc_frame_count(self.feature_cfg.target_len, cfg),
        );
        self.decode_power_to(ps, h, target)
    }

    pub fn decode_power_to(
        &self,
        ps: &ParamStore,
        h: &FeatureMap,
        target: (usize, usize),
    ) -> Result<PowerSpectrogram> {
        self.check_common_dims(h)?;
        let mut t = Tape::inference();
        let hv = feature_const(&mut t, h);
        let y = self.power_decoder.forward(&mut t, ps, hv, target, false);
        Ok(PowerSpectrogram {
            values: plane_of(t.value(y)),
            frame_ms: self.feature_cfg.lfcc.frame_ms,
            hop_ms: self.feature_cfg.lfcc.hop_ms,
        })
    }

    /// Single bona fide logit from a fused representation.
    pub fn classify(&self, ps: &ParamStore, h: &FeatureMap) -> Result<f64> {
        self.check_common_dims(h)?;
        let mut t = Tape::inference();
        let hv = feature_const(&mut t, h);
        let y = self.classifier.forward(&mut t, ps, hv);
        Ok(t.value(y)[[0, 0]])
    }

    /// Full inference pass over one waveform.
    pub fn forward(&self, ps: &ParamStore, w: &Waveform) -> Result<ModelOutput> {
        let input = self.prepare_input(std::slice::from_ref(w))?;
        let mut t = Tape::inference();
        let out = self.forward_batch(&mut t, ps, &input, false)?;
        let logit = t.value(out.logits)[[0, 0]];
        let fused = first_sample(t.value(out.h_attentive));
        let recon_raw = out
            .recon_raw
            .map(|v| RawSpectrogram { values: plane_of(t.value(v)) });
        let recon_power = out.recon_power.map(|v| PowerSpectrogram {
            values: plane_of(t.value(v)),
            frame_ms: self.feature_cfg.lfcc.frame_ms,
            hop_ms: self.feature_cfg.lfcc.hop_ms,
        });
        Ok(ModelOutput { logit, recon_raw, recon_power, fused })
    }

    /// Assemble batched inputs (waveform matrix plus LFCC features) for a
    /// slice of equal-length waveforms.
    pub fn prepare_input(&self, waves: &[Waveform]) -> Result<BatchInput> {
        if waves.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let len = waves[0].len();
        if waves.iter().any(|w| w.len() != len) {
            return Err(Error::Contract("batch waveforms must share one length".into()));
        }
        let mut mat = Array2::zeros((waves.len(), len));
        for (i, w) in waves.iter().enumerate() {
            for (j, &s) in w.samples.iter().enumerate() {
                mat[[i, j]] = s;
            }
        }
        let power = if self.cfg.fusion_mode == FusionMode::RawOnly {
            None
        } else {
            let mut planes = Vec::with_capacity(waves.len());
            for w in waves {
                let feats = lfcc(w, &self.feature_cfg.lfcc)?;
                planes.push(feats.values);
            }
            let (d, tp) = (planes[0].nrows(), planes[0].ncols());
            let mut arr = Array4::zeros((waves.len(), 1, d, tp));
            for (i, p) in planes.iter().enumerate() {
                arr.index_axis_mut(Axis(0), i).index_axis_move(Axis(0), 0).assign(p);
            }
            Some(arr)
        };
        Ok(BatchInput { waves: mat, power })
    }

    fn check_common_dims(&self, h: &FeatureMap) -> Result<()> {
        let d = self.cfg.common_dims;
        if h.dims() != (d.c, d.f, d.t) {
            return Err(Error::Contract(format!(
                "feature map dims {:?} do not match the configured ({}, {}, {})",
                h.dims(),
                d.c,
                d.f,
                d.t
            )));
        }
        Ok(())
    }
}

fn dim3(a: &Array3<f64>) -> (usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2])
}

/// (H, W) array as a tape constant shaped (1, 1, H, W).
fn to_nchw(t: &mut Tape, a: &Array2<f64>) -> Var {
    let (h, w) = (a.nrows(), a.ncols());
    let arr = ArrayD::from_shape_vec(IxDyn(&[1, 1, h, w]), a.iter().cloned().collect()).unwrap();
    t.constant(arr)
}

fn feature_const(t: &mut Tape, h: &FeatureMap) -> Var {
    let (c, f, tt) = h.dims();
    let arr =
        ArrayD::from_shape_vec(IxDyn(&[1, c, f, tt]), h.values.iter().cloned().collect()).unwrap();
    t.constant(arr)
}

fn array3_const(t: &mut Tape, a: &Array3<f64>) -> Var {
    let s = a.shape().to_vec();
    let arr = ArrayD::from_shape_vec(IxDyn(&[1, s[0], s[1], s[2]]), a.iter().cloned().collect())
        .unwrap();
    t.constant(arr)
}

/// Drop the batch axis of a (1, C, F, T) value.
fn first_sample(v: &ArrayD<f64>) -> FeatureMap {
    let s = v.shape();
    assert_eq!(s[0], 1);
    let values = Array3::from_shape_vec((s[1], s[2], s[3]), v.iter().cloned().collect()).unwrap();
    FeatureMap { values }
}

/// Drop batch and channel axes of a (1, 1, H, W) value.
fn plane_of(v: &ArrayD<f64>) -> Array2<f64> {
    let s = v.shape();
    assert_eq!((s[0], s[1]), (1, 1));
    Array2::from_shape_vec((s[2], s[3]), v.iter().cloned().collect()).unwrap()
}
