//! Adam optimizer and the cosine learning-rate schedule.

use std::collections::HashMap;

use ndarray::ArrayD;

use super::params::{ParamId, ParamStore};
use super::tape::{Grads, Tape};

/// Adam with bias correction; state is keyed by parameter id.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: HashMap<ParamId, ArrayD<f64>>,
    v: HashMap<ParamId, ArrayD<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: HashMap::new(), v: HashMap::new() }
    }

    /// Apply one update using gradients recorded on `tape`.
    ///
    /// Parameters that did not participate in the pass (or received no
    /// gradient) are left untouched. Update order follows parameter
    /// registration order, so runs are bitwise reproducible.
    pub fn step(&mut self, store: &mut ParamStore, tape: &Tape, grads: &Grads, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in store.trainable_ids() {
            let Some(var) = tape.param_var(id) else { continue };
            let Some(g) = grads.get(var) else { continue };
            let m = self
                .m
                .entry(id)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(id)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *m).and(g).for_each(|mm, &gg| {
                *mm = self.beta1 * *mm + (1.0 - self.beta1) * gg;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|vv, &gg| {
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gg * gg;
            });
            let mut value = store.value(id).clone();
            ndarray::Zip::from(&mut value).and(&*m).and(&*v).for_each(|p, &mm, &vv| {
                let mhat = mm / bc1;
                let vhat = vv / bc2;
                *p -= lr * mhat / (vhat.sqrt() + self.eps);
            });
            store.set_value(id, value);
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

/// Cosine annealing from `lr0` at epoch 0 down to `floor` at the final epoch,
/// no restarts.
#[derive(Debug, Clone, Copy)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub floor: f64,
    pub epochs: usize,
}

impl CosineSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr0;
        }
        let e = epoch.min(self.epochs - 1) as f64;
        let span = (self.epochs - 1) as f64;
        self.floor
            + 0.5 * (self.lr0 - self.floor) * (1.0 + (std::f64::consts::PI * e / span).cos())
    }
}
