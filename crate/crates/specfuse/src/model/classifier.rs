//! Classification head: attentive statistics pooling over (F,T) and a
//! two-layer MLP producing a single bona fide logit.

use rand_chacha::ChaCha8Rng;

use crate::nn::{Conv2d, Linear, ParamStore, Tape, Var};

use super::config::ClassifierConfig;

pub struct Classifier {
    score1: Conv2d,
    score2: Conv2d,
    fc1: Linear,
    fc2: Linear,
    channels: usize,
}

impl Classifier {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        cfg: &ClassifierConfig,
    ) -> Self {
        let ClassifierConfig::AttentiveStatsMlp { attn_channels, hidden } = *cfg;
        Classifier {
            score1: Conv2d::new(ps, rng, &format!("{name}.score1"), channels, attn_channels, (1, 1), (1, 1), (0, 0), true),
            score2: Conv2d::new(ps, rng, &format!("{name}.score2"), attn_channels, 1, (1, 1), (1, 1), (0, 0), true),
            fc1: Linear::new(ps, rng, &format!("{name}.fc1"), 2 * channels, hidden, true),
            fc2: Linear::new(ps, rng, &format!("{name}.fc2"), hidden, 1, true),
            channels,
        }
    }

    /// (N, C, F, T) -> logits (N, 1).
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, h: Var) -> Var {
        let shape = t.value(h).shape().to_vec();
        let (n, _c, f, tt) = (shape[0], shape[1], shape[2], shape[3]);
        // position scores -> softmax weights over (F,T)
        let e = self.score1.forward(t, ps, h);
        let e = t.tanh(e);
        let e = self.score2.forward(t, ps, e); // (N,1,F,T)
        let flat = t.reshape(e, &[n, f * tt]);
        let w_flat = t.softmax_axis1(flat);
        let w = t.reshape(w_flat, &[n, 1, f, tt]);
        // weighted mean and standard deviation per channel
        let hw = t.mul(h, w);
        let mu4 = t.sum_hw_keepdim(hw);
        let mu = t.reshape(mu4, &[n, self.channels]);
        let h2 = t.square(h);
        let h2w = t.mul(h2, w);
        let m2_4 = t.sum_hw_keepdim(h2w);
        let m2 = t.reshape(m2_4, &[n, self.channels]);
        let mu2 = t.square(mu);
        let var = t.sub(m2, mu2);
        let var_eps = t.add_scalar(var, 1e-9);
        let sigma = t.sqrt(var_eps);
        let z = t.concat(1, mu, sigma); // (N, 2C)
        let z = self.fc1.forward(t, ps, z);
        let z = t.silu(z);
        self.fc2.forward(t, ps, z)
    }
}
