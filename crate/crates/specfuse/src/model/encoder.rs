//! Residual CNN encoders projecting onto the common feature-map dimensions.

use rand_chacha::ChaCha8Rng;

use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Tape, Var};

use super::config::{CommonDims, EncoderConfig};

/// Pre-activation residual block with an optional entry max-pool.
struct ResBlock {
    pool: (usize, usize),
    bn1: BatchNorm2d,
    conv1: Conv2d,
    bn2: BatchNorm2d,
    conv2: Conv2d,
    /// 1x1 projection on the skip path when the channel count changes.
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        pool: (usize, usize),
    ) -> Self {
        ResBlock {
            pool,
            bn1: BatchNorm2d::new(ps, &format!("{name}.bn1"), cin),
            conv1: Conv2d::new(ps, rng, &format!("{name}.conv1"), cin, cout, (3, 3), (1, 1), (1, 1), true),
            bn2: BatchNorm2d::new(ps, &format!("{name}.bn2"), cout),
            conv2: Conv2d::new(ps, rng, &format!("{name}.conv2"), cout, cout, (3, 3), (1, 1), (1, 1), true),
            skip: (cin != cout).then(|| {
                Conv2d::new(ps, rng, &format!("{name}.skip"), cin, cout, (1, 1), (1, 1), (0, 0), false)
            }),
        }
    }

    fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var, train: bool) -> Var {
        let x = pool_clamped(t, x, self.pool);
        let h = self.bn1.forward(t, ps, x, train);
        let h = t.silu(h);
        let h = self.conv1.forward(t, ps, h);
        let h = self.bn2.forward(t, ps, h, train);
        let h = t.silu(h);
        let h = self.conv2.forward(t, ps, h);
        let s = match &self.skip {
            Some(proj) => proj.forward(t, ps, x),
            None => x,
        };
        t.add(h, s)
    }
}

/// Max-pool that never exceeds the current spatial extent, so one topology
/// serves front-ends of any size.
fn pool_clamped(t: &mut Tape, x: Var, pool: (usize, usize)) -> Var {
    if pool == (1, 1) {
        return x;
    }
    let shape = t.value(x).shape().to_vec();
    let k = (pool.0.min(shape[2]), pool.1.min(shape[3]));
    if k == (1, 1) {
        return x;
    }
    t.maxpool2d(x, k, k)
}

/// Stem + residual blocks + adaptive resample + 1x1 projection to the
/// common (C, F, T) feature-map space.
pub struct ResidualEncoder {
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    stem_pool: (usize, usize),
    blocks: Vec<ResBlock>,
    out_bn: BatchNorm2d,
    proj: Conv2d,
    dims: CommonDims,
}

impl ResidualEncoder {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &EncoderConfig,
        dims: CommonDims,
    ) -> Self {
        let (kh, kw) = cfg.stem_kernel;
        let stem = Conv2d::new(
            ps,
            rng,
            &format!("{name}.stem"),
            1,
            cfg.stem_channels,
            cfg.stem_kernel,
            cfg.stem_stride,
            (kh / 2, kw / 2),
            true,
        );
        let stem_bn = BatchNorm2d::new(ps, &format!("{name}.stem_bn"), cfg.stem_channels);
        let mut blocks = Vec::new();
        let mut cin = cfg.stem_channels;
        for (i, b) in cfg.blocks.iter().enumerate() {
            blocks.push(ResBlock::new(ps, rng, &format!("{name}.block{i}"), cin, b.channels, b.pool));
            cin = b.channels;
        }
        let out_bn = BatchNorm2d::new(ps, &format!("{name}.out_bn"), cin);
        let proj =
            Conv2d::new(ps, rng, &format!("{name}.proj"), cin, dims.c, (1, 1), (1, 1), (0, 0), true);
        ResidualEncoder { stem, stem_bn, stem_pool: cfg.stem_pool, blocks, out_bn, proj, dims }
    }

    /// (N, 1, H, W) -> (N, C, F, T) at the common dims, plus the final block
    /// activation used as the saliency hook.
    pub fn forward_with_hook(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        x: Var,
        train: bool,
    ) -> (Var, Var) {
        let h = self.stem.forward(t, ps, x);
        let h = self.stem_bn.forward(t, ps, h, train);
        let h = t.silu(h);
        let mut h = pool_clamped(t, h, self.stem_pool);
        for b in &self.blocks {
            h = b.forward(t, ps, h, train);
        }
        let hook = h;
        let h = self.out_bn.forward(t, ps, h, train);
        let h = t.silu(h);
        let h = t.adaptive_avg_pool2d(h, (self.dims.f, self.dims.t));
        let h = self.proj.forward(t, ps, h);
        (h, hook)
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var, train: bool) -> Var {
        self.forward_with_hook(t, ps, x, train).0
    }

}
