//! Batch normalization over NCHW tensors.

use ndarray::{Array1, ArrayD};

use super::tape::{dims4, Tape, Var};

/// Per-channel batch statistics computed during a training-mode pass.
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased variance (divides by N*H*W), used for normalization.
    pub var: Array1<f64>,
    /// Element count per channel, for the unbiased running-variance update.
    pub count: usize,
}

impl Tape {
    /// Training-mode batch norm: normalize by batch statistics.
    ///
    /// Returns the output variable plus the batch statistics so the caller
    /// can fold them into running estimates.
    pub fn batchnorm2d_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> (Var, BatchStats) {
        let xv = self.value(x);
        let (n, c, h, w) = dims4(xv.shape());
        let m = (n * h * w) as f64;
        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ic in 0..c {
            let mut acc = 0.0;
            for in_ in 0..n {
                for ih in 0..h {
                    for iw in 0..w {
                        acc += xv[[in_, ic, ih, iw]];
                    }
                }
            }
            mean[ic] = acc / m;
        }
        for ic in 0..c {
            let mu = mean[ic];
            let mut acc = 0.0;
            for in_ in 0..n {
                for ih in 0..h {
                    for iw in 0..w {
                        let d = xv[[in_, ic, ih, iw]] - mu;
                        acc += d * d;
                    }
                }
            }
            var[ic] = acc / m;
        }
        let inv_std: Array1<f64> = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let mut xhat = ArrayD::zeros(xv.raw_dim());
        let mut y = ArrayD::zeros(xv.raw_dim());
        for in_ in 0..n {
            for ic in 0..c {
                for ih in 0..h {
                    for iw in 0..w {
                        let xh = (xv[[in_, ic, ih, iw]] - mean[ic]) * inv_std[ic];
                        xhat[[in_, ic, ih, iw]] = xh;
                        y[[in_, ic, ih, iw]] = gv[[ic]] * xh + bv[[ic]];
                    }
                }
            }
        }
        let stats = BatchStats { mean: mean.clone(), var: var.clone(), count: n * h * w };
        let inv_std_c = inv_std.clone();
        let out = self.push(
            y,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g, parents, _| {
                let (n, c, h, w) = dims4(parents[0].shape());
                let m = (n * h * w) as f64;
                let gammav = parents[1];
                let mut dgamma = Array1::<f64>::zeros(c);
                let mut dbeta = Array1::<f64>::zeros(c);
                let mut sum_g = Array1::<f64>::zeros(c);
                let mut sum_gx = Array1::<f64>::zeros(c);
                for in_ in 0..n {
                    for ic in 0..c {
                        for ih in 0..h {
                            for iw in 0..w {
                                let gg = g[[in_, ic, ih, iw]];
                                let xh = xhat[[in_, ic, ih, iw]];
                                dbeta[ic] += gg;
                                dgamma[ic] += gg * xh;
                                sum_g[ic] += gg;
                                sum_gx[ic] += gg * xh;
                            }
                        }
                    }
                }
                let mut gx = ArrayD::zeros(g.raw_dim());
                for in_ in 0..n {
                    for ic in 0..c {
                        let k = gammav[[ic]] * inv_std_c[ic];
                        for ih in 0..h {
                            for iw in 0..w {
                                let gg = g[[in_, ic, ih, iw]];
                                let xh = xhat[[in_, ic, ih, iw]];
                                gx[[in_, ic, ih, iw]] =
                                    k * (gg - sum_g[ic] / m - xh * sum_gx[ic] / m);
                            }
                        }
                    }
                }
                vec![gx, dgamma.into_dyn(), dbeta.into_dyn()]
            })),
        );
        (out, stats)
    }

    /// Eval-mode batch norm: a per-channel affine using running statistics.
    pub fn batchnorm2d_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Array1<f64>,
        running_var: &Array1<f64>,
        eps: f64,
    ) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = dims4(xv.shape());
        let inv_std: Array1<f64> = running_var.mapv(|v| 1.0 / (v + eps).sqrt());
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let mut y = ArrayD::zeros(xv.raw_dim());
        for in_ in 0..n {
            for ic in 0..c {
                let k = gv[[ic]] * inv_std[ic];
                let off = bv[[ic]] - k * running_mean[ic];
                for ih in 0..h {
                    for iw in 0..w {
                        y[[in_, ic, ih, iw]] = k * xv[[in_, ic, ih, iw]] + off;
                    }
                }
            }
        }
        let rm = running_mean.clone();
        let inv = inv_std.clone();
        self.push(
            y,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g, parents, _| {
                let (n, c, h, w) = dims4(parents[0].shape());
                let xv = parents[0];
                let gammav = parents[1];
                let mut gx = ArrayD::zeros(g.raw_dim());
                let mut dgamma = Array1::<f64>::zeros(c);
                let mut dbeta = Array1::<f64>::zeros(c);
                for in_ in 0..n {
                    for ic in 0..c {
                        let k = gammav[[ic]] * inv[ic];
                        for ih in 0..h {
                            for iw in 0..w {
                                let gg = g[[in_, ic, ih, iw]];
                                gx[[in_, ic, ih, iw]] = k * gg;
                                dgamma[ic] += gg * (xv[[in_, ic, ih, iw]] - rm[ic]) * inv[ic];
                                dbeta[ic] += gg;
                            }
                        }
                    }
                }
                vec![gx, dgamma.into_dyn(), dbeta.into_dyn()]
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bn_train_value(
        x: &ArrayD<f64>,
        gamma: &Array1<f64>,
        beta: &Array1<f64>,
        eps: f64,
    ) -> ArrayD<f64> {
        let (n, c, h, w) = dims4(x.shape());
        let m = (n * h * w) as f64;
        let mut y = ArrayD::zeros(x.raw_dim());
        for ic in 0..c {
            let mut mu = 0.0;
            for in_ in 0..n {
                for ih in 0..h {
                    for iw in 0..w {
                        mu += x[[in_, ic, ih, iw]];
                    }
                }
            }
            mu /= m;
            let mut var = 0.0;
            for in_ in 0..n {
                for ih in 0..h {
                    for iw in 0..w {
                        let d = x[[in_, ic, ih, iw]] - mu;
                        var += d * d;
                    }
                }
            }
            var /= m;
            let inv = 1.0 / (var + eps).sqrt();
            for in_ in 0..n {
                for ih in 0..h {
                    for iw in 0..w {
                        y[[in_, ic, ih, iw]] =
                            gamma[ic] * (x[[in_, ic, ih, iw]] - mu) * inv + beta[ic];
                    }
                }
            }
        }
        y
    }

    #[test]
    fn bn_train_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        let x0 = ArrayD::from_shape_fn(IxDyn(&[3, 2, 2, 4]), |_| rng.random_range(-2.0..2.0));
        let g0 = Array1::from_vec(vec![1.3, 0.7]);
        let b0 = Array1::from_vec(vec![-0.2, 0.4]);
        let eps = 1e-5;
        let eval = |x: &ArrayD<f64>, g: &Array1<f64>, b: &Array1<f64>| {
            bn_train_value(x, g, b, eps).mapv(|v| v * v * 0.5).sum()
        };

        let mut t = Tape::recording();
        let x = t.constant(x0.clone());
        let ga = t.constant(g0.clone().into_dyn());
        let be = t.constant(b0.clone().into_dyn());
        let (y, _) = t.batchnorm2d_train(x, ga, be, eps);
        let y2 = t.square(y);
        let half = t.scale(y2, 0.5);
        let s = t.sum_all(half);
        let grads = t.backward(s);

        let h = 1e-5;
        // input gradient
        let gx = grads.get(x).unwrap();
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp.as_slice_mut().unwrap()[i] += h;
            xm.as_slice_mut().unwrap()[i] -= h;
            let fd = (eval(&xp, &g0, &b0) - eval(&xm, &g0, &b0)) / (2.0 * h);
            let an = gx.as_slice().unwrap()[i];
            assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3) < 1e-6, "{fd} vs {an}");
        }
        // gamma / beta gradients
        for (var, arr, which) in [(ga, g0.clone(), "gamma"), (be, b0.clone(), "beta")] {
            let gr = grads.get(var).unwrap();
            for i in 0..arr.len() {
                let mut ap = arr.clone();
                let mut am = arr.clone();
                ap[i] += h;
                am[i] -= h;
                let (fp, fm) = if which == "gamma" {
                    (eval(&x0, &ap, &b0), eval(&x0, &am, &b0))
                } else {
                    (eval(&x0, &g0, &ap), eval(&x0, &g0, &am))
                };
                let fd = (fp - fm) / (2.0 * h);
                let an = gr.as_slice().unwrap()[i];
                assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3) < 1e-6);
            }
        }
    }

    #[test]
    fn bn_eval_is_affine_identity_with_unit_stats() {
        let x0 =
            ArrayD::from_shape_vec(IxDyn(&[1, 2, 1, 2]), vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let mut t = Tape::inference();
        let x = t.constant(x0.clone());
        let ga = t.constant(Array1::from_vec(vec![1.0, 1.0]).into_dyn());
        let be = t.constant(Array1::from_vec(vec![0.0, 0.0]).into_dyn());
        let rm = Array1::zeros(2);
        let rv = Array1::ones(2);
        let y = t.batchnorm2d_eval(x, ga, be, &rm, &rv, 0.0);
        for (a, b) in t.value(y).iter().zip(x0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
