//! Temporal-spectral fusion: context pooling, the two attention branches,
//! and the gating of the fused map.
//!
//! The fused map is pooled twice with a max-of-absolutes: across time to get
//! a spectral context (C,F,1) and across frequency to get a temporal context
//! (C,1,T). Each context passes through its own bottleneck (two 1x1
//! convolutions acting as per-position fully connected layers, batch norm,
//! SiLU) and a sigmoid; the combined attention is their broadcast product,
//! so every entry lies in (0,1).

use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Tape, Var};

use super::{AttentionMap, FeatureMap};

/// Pure context pooling over one sample:
/// spectral[c,f] = max_t |h[c,f,t]|, temporal[c,t] = max_f |h[c,f,t]|.
pub fn tsf_pool(h: &FeatureMap) -> (Array3<f64>, Array3<f64>) {
    let (c, f, t) = h.dims();
    let v = &h.values;
    let mut spectral = Array3::zeros((c, f, 1));
    let mut temporal = Array3::zeros((c, 1, t));
    for ic in 0..c {
        for fi in 0..f {
            let mut m = 0.0f64;
            for ti in 0..t {
                m = m.max(v[[ic, fi, ti]].abs());
            }
            spectral[[ic, fi, 0]] = m;
        }
        for ti in 0..t {
            let mut m = 0.0f64;
            for fi in 0..f {
                m = m.max(v[[ic, fi, ti]].abs());
            }
            temporal[[ic, 0, ti]] = m;
        }
    }
    (spectral, temporal)
}

/// Gate the fused map with the combined attention, elementwise.
pub fn apply_attention(a: &AttentionMap, h_fused: &FeatureMap) -> Result<FeatureMap> {
    if a.combined.dim() != h_fused.values.dim() {
        return Err(Error::Contract(format!(
            "attention dims {:?} do not match fused map dims {:?}",
            a.combined.dim(),
            h_fused.values.dim()
        )));
    }
    Ok(FeatureMap { values: &a.combined * &h_fused.values })
}

/// One attention branch: conv1x1 -> BN -> SiLU -> conv1x1 -> sigmoid.
pub(crate) struct AttnBranch {
    conv1: Conv2d,
    bn: BatchNorm2d,
    conv2: Conv2d,
}

impl AttnBranch {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        hidden: usize,
    ) -> Self {
        AttnBranch {
            conv1: Conv2d::new(ps, rng, &format!("{name}.fc1"), channels, hidden, (1, 1), (1, 1), (0, 0), true),
            bn: BatchNorm2d::new(ps, &format!("{name}.bn"), hidden),
            conv2: Conv2d::new(ps, rng, &format!("{name}.fc2"), hidden, channels, (1, 1), (1, 1), (0, 0), true),
        }
    }

    fn forward(&self, t: &mut Tape, ps: &ParamStore, ctx: Var, train: bool) -> Var {
        let h = self.conv1.forward(t, ps, ctx);
        let h = self.bn.forward(t, ps, h, train);
        let h = t.silu(h);
        let h = self.conv2.forward(t, ps, h);
        t.sigmoid(h)
    }
}

/// Both attention branches plus the tape-level pooling/combination ops.
pub struct TsfModule {
    spectral: AttnBranch,
    temporal: AttnBranch,
}

impl TsfModule {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        hidden: usize,
    ) -> Self {
        TsfModule {
            spectral: AttnBranch::new(ps, rng, &format!("{name}.spectral"), channels, hidden),
            temporal: AttnBranch::new(ps, rng, &format!("{name}.temporal"), channels, hidden),
        }
    }

    /// Contexts from a batched fused map (N,C,F,T): ((N,C,F,1), (N,C,1,T)).
    pub fn pool(&self, t: &mut Tape, h: Var) -> (Var, Var) {
        let spectral = t.absmax_axis_keepdim(h, 3);
        let temporal = t.absmax_axis_keepdim(h, 2);
        (spectral, temporal)
    }

    /// Sub-attention maps from the pooled contexts.
    pub fn attention(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        spectral_ctx: Var,
        temporal_ctx: Var,
        train: bool,
    ) -> (Var, Var) {
        let a_s = self.spectral.forward(t, ps, spectral_ctx, train);
        let a_t = self.temporal.forward(t, ps, temporal_ctx, train);
        (a_s, a_t)
    }

    /// Combined attention (broadcast product) applied to the fused map.
    pub fn gate(&self, t: &mut Tape, a_s: Var, a_t: Var, h_fused: Var) -> (Var, Var) {
        let combined = t.mul(a_s, a_t);
        let gated = t.mul(combined, h_fused);
        (combined, gated)
    }
}
