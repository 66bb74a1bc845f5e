//! Layer structs: parameter handles plus a forward that records onto a tape.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use super::conv::ConvGeom;
use super::init;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        bias: bool,
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let w = ps.add(
            format!("{name}.weight"),
            init::fan_in_uniform(rng, &[cout, cin, kernel.0, kernel.1], fan_in),
            true,
        );
        let b = bias.then(|| ps.add(format!("{name}.bias"), init::zeros(&[cout]), true));
        Conv2d { w, b, geom: ConvGeom { kernel, stride, pad } }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let w = t.param(ps, self.w);
        let b = self.b.map(|id| t.param(ps, id));
        t.conv2d(x, w, b, self.geom)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub geom: ConvGeom,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        bias: bool,
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let w = ps.add(
            format!("{name}.weight"),
            init::fan_in_uniform(rng, &[cin, cout, kernel.0, kernel.1], fan_in),
            true,
        );
        let b = bias.then(|| ps.add(format!("{name}.bias"), init::zeros(&[cout]), true));
        ConvTranspose2d { w, b, geom: ConvGeom { kernel, stride, pad } }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let w = t.param(ps, self.w);
        let b = self.b.map(|id| t.param(ps, id));
        t.conv_transpose2d(x, w, b, self.geom)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: ps.add(format!("{name}.gamma"), init::ones(&[channels]), true),
            beta: ps.add(format!("{name}.beta"), init::zeros(&[channels]), true),
            running_mean: ps.add(format!("{name}.running_mean"), init::zeros(&[channels]), false),
            running_var: ps.add(format!("{name}.running_var"), init::ones(&[channels]), false),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// Training mode normalizes by batch statistics and queues a running-stat
    /// update on the tape; eval mode applies the stored population statistics.
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var, train: bool) -> Var {
        let gamma = t.param(ps, self.gamma);
        let beta = t.param(ps, self.beta);
        if train {
            let (y, stats) = t.batchnorm2d_train(x, gamma, beta, self.eps);
            let rm = as_array1(ps, self.running_mean);
            let rv = as_array1(ps, self.running_var);
            let unbias = if stats.count > 1 {
                stats.count as f64 / (stats.count as f64 - 1.0)
            } else {
                1.0
            };
            let new_rm = &rm * (1.0 - self.momentum) + &stats.mean * self.momentum;
            let new_rv = &rv * (1.0 - self.momentum) + &(&stats.var * unbias) * self.momentum;
            t.stat_updates.push((self.running_mean, new_rm.into_dyn()));
            t.stat_updates.push((self.running_var, new_rv.into_dyn()));
            y
        } else {
            let rm = as_array1(ps, self.running_mean);
            let rv = as_array1(ps, self.running_var);
            t.batchnorm2d_eval(x, gamma, beta, &rm, &rv, self.eps)
        }
    }
}

fn as_array1(ps: &ParamStore, id: ParamId) -> Array1<f64> {
    ps.value(id).view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned()
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_features: usize,
        out_features: usize,
        bias: bool,
    ) -> Self {
        let w = ps.add(
            format!("{name}.weight"),
            init::fan_in_uniform(rng, &[out_features, in_features], in_features),
            true,
        );
        let b = bias.then(|| ps.add(format!("{name}.bias"), init::zeros(&[out_features]), true));
        Linear { w, b }
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let w = t.param(ps, self.w);
        let b = self.b.map(|id| t.param(ps, id));
        t.linear(x, w, b)
    }
}
