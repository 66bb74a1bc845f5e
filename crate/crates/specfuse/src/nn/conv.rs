//! Convolution, transposed convolution, and pooling ops.
//!
//! All kernels run in `f64` on NCHW tensors. Convolutions go through
//! im2col + matrix multiply; the column matrix is recomputed during the
//! backward sweep instead of being cached, trading a little time for a much
//! smaller tape.

use ndarray::{Array2, Array3, Array4, ArrayD, ArrayView3, ArrayView4, Axis, IxDyn};
use rayon::prelude::*;

use super::tape::{dims4, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvGeom {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.pad;
        assert!(h + 2 * ph >= kh && w + 2 * pw >= kw, "input smaller than kernel");
        ((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1)
    }

    /// Output size of the transposed convolution with this geometry.
    pub fn transpose_out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.pad;
        ((h - 1) * sh + kh - 2 * ph, (w - 1) * sw + kw - 2 * pw)
    }
}

/// (C,H,W) -> (C*kh*kw, Ho*Wo) patch matrix.
fn im2col(x: &ArrayView3<f64>, g: ConvGeom) -> Array2<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    let (ho, wo) = g.out_hw(h, w);
    let mut col = Array2::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ih = (oi * sh + ki) as isize - ph as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let iw = (oj * sw + kj) as isize - pw as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        col[[row, oi * wo + oj]] = x[[ci, ih as usize, iw as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add patches back onto a (C,H,W) grid.
fn col2im(col: &Array2<f64>, c: usize, h: usize, w: usize, g: ConvGeom) -> Array3<f64> {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    let (ho, wo) = g.out_hw(h, w);
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ih = (oi * sh + ki) as isize - ph as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let iw = (oj * sw + kj) as isize - pw as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        x[[ci, ih as usize, iw as usize]] += col[[row, oi * wo + oj]];
                    }
                }
            }
        }
    }
    x
}

fn per_sample<F>(n: usize, f: F) -> Vec<Array3<f64>>
where
    F: Fn(usize) -> Array3<f64> + Sync + Send,
{
    if n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn stack_samples(parts: Vec<Array3<f64>>) -> ArrayD<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::stack(Axis(0), &views).expect("stack samples").into_dyn()
}

pub(crate) fn conv2d_value(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    b: Option<&[f64]>,
    g: ConvGeom,
) -> ArrayD<f64> {
    let (n, cin, h, ww) = dims4(x.shape());
    let (cout, cin_w, kh, kw) = dims4(w.shape());
    assert_eq!(cin, cin_w, "conv2d channel mismatch");
    assert_eq!((kh, kw), g.kernel);
    let (ho, wo) = g.out_hw(h, ww);
    let w_mat = w.to_shape((cout, cin * kh * kw)).unwrap().to_owned();
    let parts = per_sample(n, |i| {
        let col = im2col(&x.index_axis(Axis(0), i), g);
        let mut y = w_mat.dot(&col);
        if let Some(bias) = b {
            for (mut row, bv) in y.rows_mut().into_iter().zip(bias.iter()) {
                row += *bv;
            }
        }
        y.into_shape_with_order((cout, ho, wo)).unwrap()
    });
    stack_samples(parts)
}

fn conv2d_grad_input(
    dy: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    in_hw: (usize, usize),
    g: ConvGeom,
) -> ArrayD<f64> {
    let (n, cout, _, wo) = dims4(dy.shape());
    let (cout_w, cin, kh, kw) = dims4(w.shape());
    assert_eq!(cout, cout_w);
    let w_mat = w.to_shape((cout, cin * kh * kw)).unwrap().to_owned();
    let parts = per_sample(n, |i| {
        let dyi = dy.index_axis(Axis(0), i);
        let dy_flat = dyi.to_shape((cout, dyi.len() / cout)).unwrap().to_owned();
        let col = w_mat.t().dot(&dy_flat);
        col2im(&col, cin, in_hw.0, in_hw.1, g)
    });
    let _ = wo;
    stack_samples(parts)
}

fn conv2d_grad_weight(
    dy: &ArrayView4<f64>,
    x: &ArrayView4<f64>,
    w_shape: (usize, usize, usize, usize),
    g: ConvGeom,
) -> ArrayD<f64> {
    let (n, cout, ho, wo) = dims4(dy.shape());
    let (_, cin, kh, kw) = w_shape;
    let mut dw = Array2::zeros((cout, cin * kh * kw));
    // accumulate over the batch in index order for determinism
    let per: Vec<Array2<f64>> = if n > 1 {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let col = im2col(&x.index_axis(Axis(0), i), g);
                let dyi = dy.index_axis(Axis(0), i);
                let dy_flat = dyi.to_shape((cout, ho * wo)).unwrap().to_owned();
                dy_flat.dot(&col.t())
            })
            .collect()
    } else {
        (0..n)
            .map(|i| {
                let col = im2col(&x.index_axis(Axis(0), i), g);
                let dyi = dy.index_axis(Axis(0), i);
                let dy_flat = dyi.to_shape((cout, ho * wo)).unwrap().to_owned();
                dy_flat.dot(&col.t())
            })
            .collect()
    };
    for p in per {
        dw += &p;
    }
    dw.into_shape_with_order(IxDyn(&[cout, cin, kh, kw])).unwrap()
}

pub(crate) fn conv_transpose2d_value(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    b: Option<&[f64]>,
    g: ConvGeom,
) -> ArrayD<f64> {
    let (n, cin, h, ww) = dims4(x.shape());
    let (cin_w, cout, kh, kw) = dims4(w.shape());
    assert_eq!(cin, cin_w, "conv_transpose2d channel mismatch");
    let (ho, wo) = g.transpose_out_hw(h, ww);
    // scatter geometry: the *output* plays the role of the conv input
    let w_mat = w.to_shape((cin, cout * kh * kw)).unwrap().to_owned();
    let parts = per_sample(n, |i| {
        let xi = x.index_axis(Axis(0), i);
        let x_flat = xi.to_shape((cin, h * ww)).unwrap().to_owned();
        let col = w_mat.t().dot(&x_flat); // (cout*kh*kw, h*ww)
        let mut y = col2im(&col, cout, ho, wo, g);
        if let Some(bias) = b {
            for (mut plane, bv) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                plane += *bv;
            }
        }
        y
    });
    stack_samples(parts)
}

impl Tape {
    /// 2-d convolution. `w`: (Cout, Cin, kh, kw).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, g: ConvGeom) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix4>().expect("conv2d x 4d");
        let wv = self.value(w).view().into_dimensionality::<ndarray::Ix4>().expect("conv2d w 4d");
        let bias_vec = b.map(|bv| self.value(bv).iter().cloned().collect::<Vec<f64>>());
        let y = conv2d_value(&xv, &wv, bias_vec.as_deref(), g);
        let in_hw = (xv.shape()[2], xv.shape()[3]);
        let w_shape = dims4(wv.shape());
        let mut parents = vec![x.0, w.0];
        if let Some(bv) = b {
            parents.push(bv.0);
        }
        self.push(
            y,
            parents,
            Some(Box::new(move |gout, parents, _| {
                let dy = gout.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let xv = parents[0].view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let wv = parents[1].view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let gx = conv2d_grad_input(&dy, &wv, in_hw, g);
                let gw = conv2d_grad_weight(&dy, &xv, w_shape, g);
                let mut out = vec![gx, gw];
                if parents.len() == 3 {
                    let gb = dy.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1));
                    out.push(gb.into_dyn());
                }
                out
            })),
        )
    }

    /// Transposed 2-d convolution. `w`: (Cin, Cout, kh, kw).
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, g: ConvGeom) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix4>().expect("convT x 4d");
        let wv = self.value(w).view().into_dimensionality::<ndarray::Ix4>().expect("convT w 4d");
        let bias_vec = b.map(|bv| self.value(bv).iter().cloned().collect::<Vec<f64>>());
        let y = conv_transpose2d_value(&xv, &wv, bias_vec.as_deref(), g);
        let (cin, cout, kh, kw) = dims4(wv.shape());
        let mut parents = vec![x.0, w.0];
        if let Some(bv) = b {
            parents.push(bv.0);
        }
        self.push(
            y,
            parents,
            Some(Box::new(move |gout, parents, _| {
                let dy = gout.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let xv = parents[0].view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let wv = parents[1].view().into_dimensionality::<ndarray::Ix4>().unwrap();
                // dL/dx is an ordinary convolution of dy with w (layout matches:
                // convT weight (Cin,Cout,kh,kw) is the conv weight (Co',Ci',kh,kw)
                // with Co'=Cin, Ci'=Cout).
                let gx = conv2d_value(&dy, &wv, None, g);
                // dL/dw[ci,co,ki,kj] = sum_n x_flat @ im2col(dy)^T
                let n = xv.shape()[0];
                let (h, ww) = (xv.shape()[2], xv.shape()[3]);
                let mut gw = Array2::zeros((cin, cout * kh * kw));
                let per: Vec<Array2<f64>> = (0..n)
                    .map(|i| {
                        let col = im2col(&dy.index_axis(Axis(0), i), g);
                        let xi = xv.index_axis(Axis(0), i);
                        let x_flat = xi.to_shape((cin, h * ww)).unwrap().to_owned();
                        x_flat.dot(&col.t())
                    })
                    .collect();
                for p in per {
                    gw += &p;
                }
                let gw = gw.into_shape_with_order(IxDyn(&[cin, cout, kh, kw])).unwrap();
                let mut out = vec![gx, gw];
                if parents.len() == 3 {
                    let gb = dy.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1));
                    out.push(gb.into_dyn());
                }
                out
            })),
        )
    }

    /// Max pooling, no padding; output dims floor((in - k)/s) + 1.
    pub fn maxpool2d(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix4>().expect("pool x 4d");
        let (n, c, h, w) = dims4(xv.shape());
        let (kh, kw) = kernel;
        let (sh, sw) = stride;
        assert!(h >= kh && w >= kw, "maxpool input smaller than kernel");
        let ho = (h - kh) / sh + 1;
        let wo = (w - kw) / sw + 1;
        let mut y = Array4::zeros((n, c, ho, wo));
        let mut arg: Vec<u32> = Vec::new();
        let track = self.grad_enabled();
        if track {
            arg.resize(n * c * ho * wo, 0);
        }
        for in_ in 0..n {
            for ic in 0..c {
                for oi in 0..ho {
                    for oj in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut bidx = 0usize;
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let (ih, iw) = (oi * sh + ki, oj * sw + kj);
                                let v = xv[[in_, ic, ih, iw]];
                                if v > best {
                                    best = v;
                                    bidx = ih * w + iw;
                                }
                            }
                        }
                        y[[in_, ic, oi, oj]] = best;
                        if track {
                            arg[((in_ * c + ic) * ho + oi) * wo + oj] = bidx as u32;
                        }
                    }
                }
            }
        }
        self.push(
            y.into_dyn(),
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let mut gx = Array4::zeros((n, c, h, w));
                for in_ in 0..n {
                    for ic in 0..c {
                        for oi in 0..ho {
                            for oj in 0..wo {
                                let flat = arg[((in_ * c + ic) * ho + oi) * wo + oj] as usize;
                                gx[[in_, ic, flat / w, flat % w]] += g4[[in_, ic, oi, oj]];
                            }
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Adaptive average pooling to an exact (Oh, Ow); windows follow
    /// start = floor(o*I/O), end = ceil((o+1)*I/O), so the op both downsamples
    /// and upsamples and is used as the shape-guaranteeing resize.
    pub fn adaptive_avg_pool2d(&mut self, x: Var, out_hw: (usize, usize)) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix4>().expect("apool x 4d");
        let (n, c, h, w) = dims4(xv.shape());
        let (oh, ow) = out_hw;
        let y = adaptive_avg_pool_value(&xv, out_hw);
        self.push(
            y,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let mut gx = Array4::zeros((n, c, h, w));
                for oi in 0..oh {
                    let (h0, h1) = adaptive_window(oi, h, oh);
                    for oj in 0..ow {
                        let (w0, w1) = adaptive_window(oj, w, ow);
                        let inv = 1.0 / ((h1 - h0) * (w1 - w0)) as f64;
                        for in_ in 0..n {
                            for ic in 0..c {
                                let gv = g4[[in_, ic, oi, oj]] * inv;
                                for ih in h0..h1 {
                                    for iw in w0..w1 {
                                        gx[[in_, ic, ih, iw]] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }
}

pub fn adaptive_window(o: usize, in_size: usize, out_size: usize) -> (usize, usize) {
    let start = o * in_size / out_size;
    let end = ((o + 1) * in_size).div_ceil(out_size);
    (start, end.max(start + 1))
}

pub fn adaptive_avg_pool_value(x: &ArrayView4<f64>, out_hw: (usize, usize)) -> ArrayD<f64> {
    let (n, c, h, w) = dims4(x.shape());
    let (oh, ow) = out_hw;
    let mut y = Array4::zeros((n, c, oh, ow));
    for oi in 0..oh {
        let (h0, h1) = adaptive_window(oi, h, oh);
        for oj in 0..ow {
            let (w0, w1) = adaptive_window(oj, w, ow);
            let inv = 1.0 / ((h1 - h0) * (w1 - w0)) as f64;
            for in_ in 0..n {
                for ic in 0..c {
                    let mut acc = 0.0;
                    for ih in h0..h1 {
                        for iw in w0..w1 {
                            acc += x[[in_, ic, ih, iw]];
                        }
                    }
                    y[[in_, ic, oi, oj]] = acc * inv;
                }
            }
        }
    }
    y.into_dyn()
}
