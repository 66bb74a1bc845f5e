//! Training objectives: reconstruction losses, class-weighted binary
//! cross-entropy, and the weighted total.
//!
//! Each objective exists twice: as a pure function over arrays (used for
//! reporting and as the reference in gradient checks) and as a tape op
//! (used in training). Both share the same formulas.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// Probability clip applied inside the cross-entropy.
pub const WBCE_EPS: f64 = 1e-7;

/// Which distance the reconstruction losses use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReconNorm {
    /// Mean absolute deviation (default).
    #[default]
    MeanAbs,
    /// Mean squared deviation.
    MeanSquare,
}

/// Per-class weights for the classification loss.
///
/// `w_pos` multiplies bona fide (label 1) terms, `w_neg` spoof (label 0)
/// terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbceWeights {
    pub w_pos: f64,
    pub w_neg: f64,
}

impl WbceWeights {
    /// Inverse class frequency, normalized to sum to 1.
    ///
    /// 2,580 bona fide against 22,800 spoofed training trials gives
    /// w_pos ~ 0.898, w_neg ~ 0.102.
    pub fn inverse_frequency(n_pos: usize, n_neg: usize) -> Self {
        assert!(n_pos > 0 && n_neg > 0, "both classes must be present");
        let (a, b) = (1.0 / n_pos as f64, 1.0 / n_neg as f64);
        WbceWeights { w_pos: a / (a + b), w_neg: b / (a + b) }
    }

    pub fn balanced() -> Self {
        WbceWeights { w_pos: 0.5, w_neg: 0.5 }
    }
}

/// All loss terms of one step plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_recon_raw: f64,
    pub l_recon_power: f64,
    pub l_cls: f64,
    pub alpha: f64,
    pub total: f64,
}

/// Mean deviation between a reconstruction and its target.
///
/// Symmetric, non-negative, zero iff the arrays are identical (mean-abs) and
/// absolutely homogeneous: scaling both inputs by c scales the result by |c|.
pub fn recon_loss(x_hat: &ArrayD<f64>, x: &ArrayD<f64>, norm: ReconNorm) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::Contract(format!(
            "reconstruction loss on mismatched shapes {:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let n = x.len() as f64;
    let v = match norm {
        ReconNorm::MeanAbs => {
            x_hat.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
        }
        ReconNorm::MeanSquare => {
            x_hat.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
        }
    };
    Ok(v)
}

/// Class-weighted binary cross-entropy over a batch.
///
/// Per sample: -(w_pos * y * ln p + w_neg * (1-y) * ln(1-p)) with p clipped
/// to [eps, 1-eps]; the batch reduction is the mean.
pub fn wbce(y_hat: &[f64], y: &[f64], w: WbceWeights) -> f64 {
    assert_eq!(y_hat.len(), y.len());
    assert!(!y_hat.is_empty());
    let mut acc = 0.0;
    for (&p, &label) in y_hat.iter().zip(y.iter()) {
        let p = p.clamp(WBCE_EPS, 1.0 - WBCE_EPS);
        acc -= w.w_pos * label * p.ln() + w.w_neg * (1.0 - label) * (1.0 - p).ln();
    }
    acc / y.len() as f64
}

/// Total objective: alpha * (l_recon_raw + l_recon_power) + l_cls.
///
/// Non-finite inputs abort training rather than propagating NaNs.
pub fn total_loss(l1: f64, l2: f64, lcls: f64, alpha: f64) -> Result<LossBreakdown> {
    for (name, v) in [("l_recon_raw", l1), ("l_recon_power", l2), ("l_cls", lcls)] {
        if !v.is_finite() {
            return Err(Error::TrainAbort(format!("non-finite loss component {name} = {v}")));
        }
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let total = alpha * (l1 + l2) + lcls;
    if !total.is_finite() {
        return Err(Error::TrainAbort(format!("non-finite total loss {total}")));
    }
    Ok(LossBreakdown { l_recon_raw: l1, l_recon_power: l2, l_cls: lcls, alpha, total })
}

// ---- tape versions ----

/// Reconstruction loss as a tape op; scalar output.
pub fn recon_loss_op(t: &mut Tape, x_hat: Var, x: Var, norm: ReconNorm) -> Var {
    assert_eq!(
        t.value(x_hat).shape(),
        t.value(x).shape(),
        "reconstruction loss on mismatched shapes"
    );
    let d = t.sub(x_hat, x);
    let e = match norm {
        ReconNorm::MeanAbs => t.abs(d),
        ReconNorm::MeanSquare => t.square(d),
    };
    t.mean_all(e)
}

/// Weighted BCE on logits as a tape op. `labels` must be 0/1 with the same
/// shape as `logits` (N,1).
pub fn wbce_logits_op(t: &mut Tape, logits: Var, labels: &ArrayD<f64>, w: WbceWeights) -> Var {
    let y = t.constant(labels.clone());
    let p_raw = t.sigmoid(logits);
    let p = t.clamp(p_raw, WBCE_EPS, 1.0 - WBCE_EPS);
    let lp = t.ln(p);
    let one_minus_p = {
        let n = t.neg(p);
        t.add_scalar(n, 1.0)
    };
    let lq = t.ln(one_minus_p);
    let one_minus_y = {
        let n = t.neg(y);
        t.add_scalar(n, 1.0)
    };
    let pos = t.mul(y, lp);
    let neg = t.mul(one_minus_y, lq);
    let pos_w = t.scale(pos, w.w_pos);
    let neg_w = t.scale(neg, w.w_neg);
    let s = t.add(pos_w, neg_w);
    let m = t.mean_all(s);
    t.neg(m)
}

/// alpha * (l1 + l2) + lcls on the tape.
pub fn total_loss_op(t: &mut Tape, l1: Var, l2: Var, lcls: Var, alpha: f64) -> Var {
    let recon = t.add(l1, l2);
    let weighted = t.scale(recon, alpha);
    t.add(weighted, lcls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, ArrayD, IxDyn};

    #[test]
    fn recon_loss_identity_is_zero() {
        let x = arr2(&[[0.3, -0.2], [1.0, 4.0]]).into_dyn();
        assert_eq!(recon_loss(&x, &x, ReconNorm::MeanAbs).unwrap(), 0.0);
    }

    #[test]
    fn recon_loss_ones_vs_zeros_is_one() {
        let x = ArrayD::zeros(IxDyn(&[2, 2]));
        let xh = ArrayD::ones(IxDyn(&[2, 2]));
        assert_eq!(recon_loss(&xh, &x, ReconNorm::MeanAbs).unwrap(), 1.0);
    }

    #[test]
    fn recon_loss_matches_elementwise_mean() {
        let a: ArrayD<f64> = arr2(&[[0.5, -1.5, 2.0], [0.0, 3.0, -0.25]]).into_dyn();
        let b: ArrayD<f64> = arr2(&[[0.25, 1.5, 2.5], [-1.0, 3.0, 0.75]]).into_dyn();
        let mut acc = 0.0f64;
        for (&x, &y) in a.iter().zip(b.iter()) {
            acc += (x - y).abs();
        }
        let expect = acc / 6.0;
        assert!((recon_loss(&a, &b, ReconNorm::MeanAbs).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn recon_loss_shape_mismatch_is_contract_violation() {
        let a = ArrayD::<f64>::zeros(IxDyn(&[2, 2]));
        let b = ArrayD::<f64>::zeros(IxDyn(&[2, 3]));
        assert!(matches!(
            recon_loss(&a, &b, ReconNorm::MeanAbs),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn recon_loss_symmetry_and_scaling() {
        let a = arr2(&[[1.0, -2.0], [0.5, 3.0]]).into_dyn();
        let b = arr2(&[[0.0, 1.0], [2.5, -1.0]]).into_dyn();
        let ab = recon_loss(&a, &b, ReconNorm::MeanAbs).unwrap();
        let ba = recon_loss(&b, &a, ReconNorm::MeanAbs).unwrap();
        assert_eq!(ab, ba);
        let lam = -2.5;
        let scaled =
            recon_loss(&a.mapv(|v| v * lam), &b.mapv(|v| v * lam), ReconNorm::MeanAbs).unwrap();
        assert!((scaled - lam.abs() * ab).abs() < 1e-12);
    }

    #[test]
    fn wbce_half_prediction_is_ln2() {
        let loss = wbce(&[0.5], &[1.0], WbceWeights { w_pos: 1.0, w_neg: 1.0 });
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn wbce_perfect_prediction_is_near_zero() {
        let w = WbceWeights::balanced();
        let loss = wbce(&[1.0, 0.0], &[1.0, 0.0], w);
        // clipped at eps, so bounded by w * eps-ish log term
        assert!(loss <= 0.5 * WBCE_EPS * WBCE_EPS.ln().abs() * 2.0 + 1e-12, "loss {loss}");
    }

    #[test]
    fn wbce_matches_closed_form_batch() {
        let w = WbceWeights { w_pos: 0.5, w_neg: 0.5 };
        let loss = wbce(&[0.9, 0.2], &[1.0, 0.0], w);
        let expect = (0.5 * -(0.9f64.ln()) + 0.5 * -(0.8f64.ln())) / 2.0;
        assert!((loss - expect).abs() < 1e-15);
    }

    #[test]
    fn wbce_monotone_decreasing_for_positive_label() {
        let w = WbceWeights::balanced();
        let mut prev = f64::INFINITY;
        let mut p = WBCE_EPS;
        while p < 1.0 - WBCE_EPS {
            let l = wbce(&[p], &[1.0], w);
            assert!(l < prev);
            prev = l;
            p += 0.01;
        }
    }

    #[test]
    fn inverse_frequency_weights_match_protocol_counts() {
        let w = WbceWeights::inverse_frequency(2580, 22800);
        assert!((w.w_pos - 0.8983).abs() < 1e-3, "w_pos {}", w.w_pos);
        assert!((w.w_neg - 0.1017).abs() < 1e-3, "w_neg {}", w.w_neg);
        assert!((w.w_pos + w.w_neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_direct_evaluation() {
        let b = total_loss(2.0, 3.0, 0.5, 0.1).unwrap();
        assert_eq!(b.total, 1.0);
        assert_eq!(b.alpha, 0.1);
    }

    #[test]
    fn total_loss_alpha_zero_degenerates_to_classification() {
        let b = total_loss(7.0, 11.0, 0.25, 0.0).unwrap();
        assert_eq!(b.total, 0.25);
    }

    #[test]
    fn total_loss_aborts_on_non_finite() {
        assert!(matches!(
            total_loss(f64::NAN, 0.0, 0.0, 0.1),
            Err(Error::TrainAbort(_))
        ));
        assert!(matches!(
            total_loss(0.0, f64::INFINITY, 0.0, 0.1),
            Err(Error::TrainAbort(_))
        ));
    }

    #[test]
    fn tape_losses_match_pure_functions_and_finite_differences() {
        let xh0 = arr2(&[[0.4, -0.7], [1.2, 0.1]]).into_dyn();
        let x0 = arr2(&[[0.1, 0.2], [-0.3, 0.4]]).into_dyn();
        let mut t = Tape::recording();
        let xh = t.constant(xh0.clone());
        let x = t.constant(x0.clone());
        let l = recon_loss_op(&mut t, xh, x, ReconNorm::MeanAbs);
        let pure = recon_loss(&xh0, &x0, ReconNorm::MeanAbs).unwrap();
        assert!((t.value(l)[[]] - pure).abs() < 1e-15);

        let grads = t.backward(l);
        let g = grads.get(xh).unwrap();
        let h = 1e-6;
        for i in 0..xh0.len() {
            let mut p = xh0.clone();
            let mut m = xh0.clone();
            p.as_slice_mut().unwrap()[i] += h;
            m.as_slice_mut().unwrap()[i] -= h;
            let fd = (recon_loss(&p, &x0, ReconNorm::MeanAbs).unwrap()
                - recon_loss(&m, &x0, ReconNorm::MeanAbs).unwrap())
                / (2.0 * h);
            let an = g.as_slice().unwrap()[i];
            assert!((fd - an).abs() < 1e-6, "{fd} vs {an}");
        }
    }

    #[test]
    fn tape_wbce_matches_pure_function() {
        let logits0 = arr2(&[[1.3], [-0.4], [0.2]]).into_dyn();
        let labels = arr2(&[[1.0], [0.0], [1.0]]).into_dyn();
        let w = WbceWeights { w_pos: 0.75, w_neg: 0.25 };
        let mut t = Tape::recording();
        let logits = t.constant(logits0.clone());
        let l = wbce_logits_op(&mut t, logits, &labels, w);
        let probs: Vec<f64> =
            logits0.iter().map(|&z| 1.0 / (1.0 + (-z as f64).exp())).collect();
        let ys: Vec<f64> = labels.iter().cloned().collect();
        let pure = wbce(&probs, &ys, w);
        assert!((t.value(l)[[]] - pure).abs() < 1e-12);
    }
}
