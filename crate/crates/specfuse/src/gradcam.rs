//! Gradient-weighted class activation maps over the two encoder branches.
//!
//! For each branch the hook point is the final residual block's activation
//! A (C' x F' x T'). Channel weights are the spatial means of d(logit)/dA;
//! the saliency is the ReLU of the weighted channel sum, resampled onto the
//! branch's input spectrogram and max-normalized to 1.

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::features::Waveform;
use crate::model::SpecFuseNet;
use crate::nn::{adaptive_avg_pool_value, ParamStore, Tape, Var};

/// Saliency maps at the corresponding spectrogram's dimensions, each entry
/// in [0, 1] with the maximum at 1 (all-zero when the map is flat).
#[derive(Debug, Clone)]
pub struct GradCamOutput {
    pub raw: Option<Array2<f64>>,
    pub power: Option<Array2<f64>>,
}

/// Compute Grad-CAM saliency for one utterance.
pub fn grad_cam(net: &SpecFuseNet, ps: &ParamStore, w: &Waveform) -> Result<GradCamOutput> {
    if w.len() < net.feature_cfg.sinc.kernel_len
        || w.len() < net.feature_cfg.lfcc.frame_samples()
    {
        return Err(Error::Input(format!(
            "utterance of {} samples is shorter than the front-end minimum",
            w.len()
        )));
    }
    let input = net.prepare_input(std::slice::from_ref(w))?;
    let mut t = Tape::recording();
    let out = net.forward_batch(&mut t, ps, &input, false)?;
    let grads = t.backward(out.logits);

    let cam_for = |t: &Tape, hook: Var, target_hw: (usize, usize)| -> Option<Array2<f64>> {
        let act = t.value(hook);
        let grad = grads.get(hook)?;
        Some(cam_from_activation(act, grad, target_hw))
    };

    let raw = match (out.raw_hook, out.x_raw) {
        (Some(hook), Some(x1)) => {
            let s = t.value(x1).shape().to_vec();
            cam_for(&t, hook, (s[1], s[2]))
        }
        _ => None,
    };
    let power = match (out.power_hook, out.x_power) {
        (Some(hook), Some(x2)) => {
            let s = t.value(x2).shape().to_vec();
            cam_for(&t, hook, (s[2], s[3]))
        }
        _ => None,
    };
    Ok(GradCamOutput { raw, power })
}

/// Channel-weighted activation sum -> ReLU -> resample -> max-normalize.
fn cam_from_activation(
    act: &ArrayD<f64>,
    grad: &ArrayD<f64>,
    target_hw: (usize, usize),
) -> Array2<f64> {
    let s = act.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    let mut cam = Array2::<f64>::zeros((h, w));
    for k in 0..c {
        let mut alpha = 0.0;
        for i in 0..h {
            for j in 0..w {
                alpha += grad[[0, k, i, j]];
            }
        }
        alpha /= (h * w) as f64;
        for i in 0..h {
            for j in 0..w {
                cam[[i, j]] += alpha * act[[0, k, i, j]];
            }
        }
    }
    cam.mapv_inplace(|v| v.max(0.0));
    // resample to the spectrogram's grid
    let cam4 =
        ArrayD::from_shape_vec(IxDyn(&[1, 1, h, w]), cam.iter().cloned().collect()).unwrap();
    let view = cam4.view().into_dimensionality::<ndarray::Ix4>().unwrap();
    let resized = adaptive_avg_pool_value(&view, target_hw);
    let mut out = Array2::zeros(target_hw);
    for i in 0..target_hw.0 {
        for j in 0..target_hw.1 {
            out[[i, j]] = resized[[0, 0, i, j]];
        }
    }
    let m = out.iter().cloned().fold(0.0f64, f64::max);
    if m > 0.0 {
        out.mapv_inplace(|v| v / m);
    }
    out
}

/// Fraction of saliency mass in the top third of the frequency axis
/// (row 0 is the lowest band).
pub fn upper_band_mass(cam: &Array2<f64>) -> f64 {
    let rows = cam.nrows();
    let start = rows - rows / 3;
    let total: f64 = cam.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let upper: f64 = (start..rows).map(|r| cam.row(r).sum()).sum();
    upper / total
}

/// Render a saliency map as a PNG (viridis-style ramp, low frequencies at
/// the bottom). Convenience output; the numeric arrays are the artifact.
pub fn save_saliency_png(path: &std::path::Path, cam: &Array2<f64>) -> Result<()> {
    let (h, w) = (cam.nrows(), cam.ncols());
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            // flip vertically so row 0 (low frequency) lands at the bottom
            let v = cam[[h - 1 - i, j]].clamp(0.0, 1.0);
            img.put_pixel(j as u32, i as u32, image::Rgb(colormap(v)));
        }
    }
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    img.save(path).map_err(|e| Error::Internal(format!("png write {}: {e}", path.display())))
}

fn colormap(v: f64) -> [u8; 3] {
    const ANCHORS: [(f64, [f64; 3]); 5] = [
        (0.00, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.50, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.00, [253.0, 231.0, 37.0]),
    ];
    for k in 0..ANCHORS.len() - 1 {
        let (a, ca) = ANCHORS[k];
        let (b, cb) = ANCHORS[k + 1];
        if v >= a && v <= b {
            let t = (v - a) / (b - a);
            return [
                (ca[0] + t * (cb[0] - ca[0])) as u8,
                (ca[1] + t * (cb[1] - ca[1])) as u8,
                (ca[2] + t * (cb[2] - ca[2])) as u8,
            ];
        }
    }
    [253, 231, 37]
}
