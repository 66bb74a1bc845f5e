//! Reverse-mode automatic differentiation over `f64` ndarrays.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes. Calling
//! [`Tape::backward`] walks the list in reverse and accumulates gradients
//! for every node, so gradients of intermediate activations (used by the
//! saliency mapper) come for free alongside parameter gradients.
//!
//! The tape is built fresh for every forward pass. With gradients disabled
//! no backward closures are stored, which keeps inference allocations to the
//! activation values themselves.

use std::collections::HashMap;

use ndarray::{ArrayD, Axis, IxDyn};

use super::params::{ParamId, ParamStore};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&ArrayD<f64>, &[&ArrayD<f64>], &ArrayD<f64>) -> Vec<ArrayD<f64>>>;

struct Node {
    value: ArrayD<f64>,
    parents: Vec<usize>,
    back: Option<BackFn>,
}

/// Gradients produced by [`Tape::backward`], indexable by [`Var`].
pub struct Grads {
    g: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.g.get(v.0).and_then(|o| o.as_ref())
    }
}

/// One recorded forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
    param_vars: HashMap<ParamId, Var>,
    /// Batch-norm running-statistic updates collected during a training
    /// forward pass; the trainer applies them to the store after the step.
    pub(crate) stat_updates: Vec<(ParamId, ArrayD<f64>)>,
}

impl Tape {
    /// Tape that records backward closures (training / gradient checks).
    pub fn recording() -> Self {
        Tape { nodes: Vec::new(), grad_enabled: true, param_vars: HashMap::new(), stat_updates: Vec::new() }
    }

    /// Tape that only computes values (inference).
    pub fn inference() -> Self {
        Tape { nodes: Vec::new(), grad_enabled: false, param_vars: HashMap::new(), stat_updates: Vec::new() }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<f64>,
        parents: Vec<usize>,
        back: Option<BackFn>,
    ) -> Var {
        let back = if self.grad_enabled { back } else { None };
        self.nodes.push(Node { value, parents, back });
        Var(self.nodes.len() - 1)
    }

    /// Leaf with no gradient flow.
    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, vec![], None)
    }

    /// Bind a stored parameter as a leaf. Repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), vec![], None);
        self.param_vars.insert(id, v);
        v
    }

    /// The tape node a parameter was bound to, if it participated in this pass.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.param_vars.get(&id).copied()
    }

    /// Reverse sweep from `root`, seeding with ones of the root's shape.
    pub fn backward(&self, root: Var) -> Grads {
        assert!(self.grad_enabled, "backward on an inference tape");
        let mut grads: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(ArrayD::ones(self.nodes[root.0].value.raw_dim()));
        for i in (0..=root.0).rev() {
            if grads[i].is_none() {
                continue;
            }
            let node = &self.nodes[i];
            let Some(back) = node.back.as_ref() else { continue };
            let g = grads[i].take().unwrap();
            let parent_vals: Vec<&ArrayD<f64>> =
                node.parents.iter().map(|p| &self.nodes[*p].value).collect();
            let pgrads = back(&g, &parent_vals, &node.value);
            debug_assert_eq!(pgrads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(pgrads) {
                match &mut grads[*p] {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        Grads { g: grads }
    }

    // ---- elementwise unary ----

    fn unary(
        &mut self,
        x: Var,
        value: ArrayD<f64>,
        // (x_value, y_value) -> dy/dx, elementwise
        dfun: impl Fn(&ArrayD<f64>, &ArrayD<f64>) -> ArrayD<f64> + 'static,
    ) -> Var {
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g, parents, out| {
                let d = dfun(parents[0], out);
                vec![g * &d]
            })),
        )
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| -a);
        self.unary(x, v, |x, _| x.mapv(|_| -1.0))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::abs);
        self.unary(x, v, |x, _| x.mapv(f64::signum))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a.max(0.0));
        self.unary(x, v, |x, _| x.mapv(|a| if a > 0.0 { 1.0 } else { 0.0 }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid_scalar);
        self.unary(x, v, |_, y| y.mapv(|s| s * (1.0 - s)))
    }

    /// x * sigmoid(x).
    pub fn silu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a * sigmoid_scalar(a));
        self.unary(x, v, |x, _| {
            x.mapv(|a| {
                let s = sigmoid_scalar(a);
                s * (1.0 + a * (1.0 - s))
            })
        })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::tanh);
        self.unary(x, v, |_, y| y.mapv(|t| 1.0 - t * t))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::ln);
        self.unary(x, v, |x, _| x.mapv(|a| 1.0 / a))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::sqrt);
        self.unary(x, v, |_, y| y.mapv(|s| 0.5 / s))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a * a);
        self.unary(x, v, |x, _| x.mapv(|a| 2.0 * a))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).mapv(|a| a * c);
        self.unary(x, v, move |x, _| x.mapv(|_| c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).mapv(|a| a + c);
        self.unary(x, v, |x, _| x.mapv(|_| 1.0))
    }

    /// Clamp to `[lo, hi]`; gradient passes through strictly inside the range.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).mapv(|a| a.clamp(lo, hi));
        self.unary(x, v, move |x, _| {
            x.mapv(|a| if a > lo && a < hi { 1.0 } else { 0.0 })
        })
    }

    // ---- elementwise binary with numpy-style broadcasting ----

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        // (a, b, grad_out) -> (grad_a_full, grad_b_full), both at broadcast shape
        dfun: impl Fn(&ArrayD<f64>, &ArrayD<f64>, &ArrayD<f64>) -> (ArrayD<f64>, ArrayD<f64>)
            + 'static,
    ) -> Var {
        let shape = broadcast_shape(self.value(a).shape(), self.value(b).shape());
        let av = self.value(a).broadcast(IxDyn(&shape)).expect("broadcast a").to_owned();
        let bv = self.value(b).broadcast(IxDyn(&shape)).expect("broadcast b").to_owned();
        let mut out = av.clone();
        ndarray::Zip::from(&mut out).and(&bv).for_each(|o, &bb| *o = f(*o, bb));
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |g, parents, _| {
                let av = parents[0].broadcast(g.raw_dim()).unwrap().to_owned();
                let bv = parents[1].broadcast(g.raw_dim()).unwrap().to_owned();
                let (ga, gb) = dfun(&av, &bv, g);
                vec![reduce_to_shape(&ga, &sa), reduce_to_shape(&gb, &sb)]
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, |_, _, g| (g.clone(), g.clone()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, |_, _, g| (g.clone(), g.mapv(|v| -v)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, |a, b, g| (g * b, g * a))
    }

    // ---- reductions ----

    /// Sum of all entries, as a 0-dim array.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let shape = self.value(x).raw_dim();
        self.push(
            ArrayD::from_elem(IxDyn(&[]), s),
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let gs = g[[]];
                vec![ArrayD::from_elem(shape.clone(), gs)]
            })),
        )
    }

    /// Mean of all entries, as a 0-dim array.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum over the trailing two axes of a 4-d tensor, keeping dims: (N,C,H,W) -> (N,C,1,1).
    pub fn sum_hw_keepdim(&mut self, x: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.ndim(), 4, "sum_hw_keepdim expects 4-d input");
        let (n, c, h, w) = dims4(v.shape());
        let mut out = ArrayD::zeros(IxDyn(&[n, c, 1, 1]));
        for in_ in 0..n {
            for ic in 0..c {
                let mut acc = 0.0;
                for ih in 0..h {
                    for iw in 0..w {
                        acc += v[[in_, ic, ih, iw]];
                    }
                }
                out[[in_, ic, 0, 0]] = acc;
            }
        }
        self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let mut gx = ArrayD::zeros(IxDyn(&[n, c, h, w]));
                for in_ in 0..n {
                    for ic in 0..c {
                        let gv = g[[in_, ic, 0, 0]];
                        for ih in 0..h {
                            for iw in 0..w {
                                gx[[in_, ic, ih, iw]] = gv;
                            }
                        }
                    }
                }
                vec![gx]
            })),
        )
    }

    /// max over `axis` of |x|, keeping the axis with size 1.
    pub fn absmax_axis_keepdim(&mut self, x: Var, axis: usize) -> Var {
        let v = self.value(x);
        let in_shape = v.shape().to_vec();
        let mut out_shape = in_shape.clone();
        out_shape[axis] = 1;
        let mut out = ArrayD::zeros(IxDyn(&out_shape));
        // argmax index along `axis` per lane, plus the sign of that entry;
        // lanes() and out.iter_mut() agree on iteration order (row-major over
        // the remaining axes).
        let mut arg: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for (slot, lane) in out.iter_mut().zip(v.lanes(Axis(axis)).into_iter()) {
            let mut bi = 0usize;
            let mut best = f64::NEG_INFINITY;
            let mut sgn = 0.0;
            for (i, &val) in lane.iter().enumerate() {
                if val.abs() > best {
                    best = val.abs();
                    bi = i;
                    sgn = val.signum();
                }
            }
            *slot = best;
            arg.push((bi, sgn));
        }
        self.push(
            out,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                let mut gx = ArrayD::zeros(IxDyn(&in_shape));
                for ((mut lane, gv), &(bi, sgn)) in
                    gx.lanes_mut(Axis(axis)).into_iter().zip(g.iter()).zip(arg.iter())
                {
                    lane[bi] = gv * sgn;
                }
                vec![gx]
            })),
        )
    }

    // ---- shape ops ----

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let old_shape = self.value(x).shape().to_vec();
        let v = self
            .value(x)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(
            v,
            vec![x.0],
            Some(Box::new(move |g, _, _| {
                vec![g.clone().into_shape_with_order(IxDyn(&old_shape)).unwrap()]
            })),
        )
    }

    pub fn concat(&mut self, axis: usize, a: Var, b: Var) -> Var {
        let av = self.value(a).view();
        let bv = self.value(b).view();
        let na = av.shape()[axis];
        let v = ndarray::concatenate(Axis(axis), &[av, bv]).expect("concat shape mismatch");
        self.push(
            v,
            vec![a.0, b.0],
            Some(Box::new(move |g, _, _| {
                let ga = g.index_axis_range(axis, 0, na);
                let nb = g.shape()[axis];
                let gb = g.index_axis_range(axis, na, nb);
                vec![ga, gb]
            })),
        )
    }

    // ---- linear algebra ----

    /// Fully connected layer: x (N,D) @ w^T (D,O) + b -> (N,O).
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix2>().expect("linear x 2d");
        let wv = self.value(w).view().into_dimensionality::<ndarray::Ix2>().expect("linear w 2d");
        assert_eq!(xv.ncols(), wv.ncols(), "linear: feature dims differ");
        let mut y = xv.dot(&wv.t());
        if let Some(bv) = b {
            let bb = self.value(bv).view().into_dimensionality::<ndarray::Ix1>().unwrap();
            y += &bb;
        }
        let mut parents = vec![x.0, w.0];
        if let Some(bv) = b {
            parents.push(bv.0);
        }
        self.push(
            y.into_dyn(),
            parents,
            Some(Box::new(move |g, parents, _| {
                let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let xv = parents[0].view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let wv = parents[1].view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let gx = g2.dot(&wv).into_dyn();
                let gw = g2.t().dot(&xv).into_dyn();
                let mut out = vec![gx, gw];
                if parents.len() == 3 {
                    out.push(g2.sum_axis(Axis(0)).into_dyn());
                }
                out
            })),
        )
    }

    /// Softmax over axis 1 of a 2-d tensor.
    pub fn softmax_axis1(&mut self, x: Var) -> Var {
        let xv = self.value(x).view().into_dimensionality::<ndarray::Ix2>().expect("softmax 2d");
        let mut y = xv.to_owned();
        for mut row in y.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|a| (a - m).exp());
            let s = row.sum();
            row.mapv_inplace(|a| a / s);
        }
        self.push(
            y.into_dyn(),
            vec![x.0],
            Some(Box::new(move |g, _, out| {
                let y = out.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let mut gx = g2.to_owned();
                for (mut grow, yrow) in gx.rows_mut().into_iter().zip(y.rows()) {
                    let dot: f64 = grow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                    for (gv, yv) in grow.iter_mut().zip(yrow.iter()) {
                        *gv = yv * (*gv - dot);
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4);
    (shape[0], shape[1], shape[2], shape[3])
}

/// numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(da == db || da == 1 || db == 1, "incompatible broadcast: {a:?} vs {b:?}");
        out[i] = da.max(db);
    }
    out
}

/// Sum a gradient at broadcast shape back down to `shape`.
pub(crate) fn reduce_to_shape(g: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    let mut out = g.clone();
    while out.ndim() > shape.len() {
        out = out.sum_axis(Axis(0));
    }
    for (ax, (&have, &want)) in out.shape().to_vec().iter().zip(shape.iter()).enumerate() {
        if want == 1 && have != 1 {
            let summed = out.sum_axis(Axis(ax));
            out = summed.insert_axis(Axis(ax));
        }
    }
    out
}

trait IndexAxisRange {
    fn index_axis_range(&self, axis: usize, from: usize, to: usize) -> ArrayD<f64>;
}

impl IndexAxisRange for ArrayD<f64> {
    fn index_axis_range(&self, axis: usize, from: usize, to: usize) -> ArrayD<f64> {
        self.slice_axis(Axis(axis), ndarray::Slice::from(from..to)).to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn fd_grad(f: impl Fn(&ArrayD<f64>) -> f64, x: &ArrayD<f64>, h: f64) -> ArrayD<f64> {
        let mut g = ArrayD::zeros(x.raw_dim());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[i] += h;
            xm.as_slice_mut().unwrap()[i] -= h;
            g.as_slice_mut().unwrap()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn assert_close(a: &ArrayD<f64>, b: &ArrayD<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            let denom = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() / denom < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn unary_chain_matches_finite_differences() {
        let x0 = arr1(&[0.3, -1.2, 2.5, -0.4]).into_dyn();
        let f = |x: &ArrayD<f64>| -> f64 {
            x.mapv(|a| {
                let s = 1.0 / (1.0 + (-a).exp());
                (a * s).tanh()
            })
            .sum()
        };
        let mut t = Tape::recording();
        let x = t.constant(x0.clone());
        let y = t.silu(x);
        let z = t.tanh(y);
        let s = t.sum_all(z);
        let grads = t.backward(s);
        assert_close(grads.get(x).unwrap(), &fd_grad(f, &x0, 1e-6), 1e-8);
    }

    #[test]
    fn broadcast_mul_reduces_gradients() {
        let a0 = arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn(); // (2,2)
        let b0 = arr1(&[0.5, -2.0]).into_dyn(); // (2,) broadcasts over rows
        let mut t = Tape::recording();
        let a = t.constant(a0.clone());
        let b = t.constant(b0.clone());
        let y = t.mul(a, b);
        let s = t.sum_all(y);
        let g = t.backward(s);
        // d/da = broadcast b; d/db = column sums of a
        assert_close(g.get(a).unwrap(), &arr2(&[[0.5, -2.0], [0.5, -2.0]]).into_dyn(), 1e-12);
        assert_close(g.get(b).unwrap(), &arr1(&[4.0, 6.0]).into_dyn(), 1e-12);
    }

    #[test]
    fn absmax_routes_gradient_to_argmax_with_sign() {
        let x0 = ndarray::Array3::from_shape_vec((1, 2, 3), vec![1.0, -3.0, 2.0, 0.5, 0.2, -0.1])
            .unwrap()
            .into_dyn();
        let mut t = Tape::recording();
        let x = t.constant(x0);
        let m = t.absmax_axis_keepdim(x, 2);
        assert_eq!(t.value(m).shape(), &[1, 2, 1]);
        assert_eq!(t.value(m)[[0, 0, 0]], 3.0);
        assert_eq!(t.value(m)[[0, 1, 0]], 0.5);
        let s = t.sum_all(m);
        let g = t.backward(s);
        let gx = g.get(x).unwrap();
        assert_eq!(gx[[0, 0, 1]], -1.0); // |-3| is max, sign -
        assert_eq!(gx[[0, 1, 0]], 1.0);
        assert_eq!(gx[[0, 0, 0]], 0.0);
    }

    #[test]
    fn linear_matches_finite_differences() {
        let x0 = arr2(&[[0.1, -0.2, 0.3], [1.0, 0.5, -0.7]]).into_dyn();
        let w0 = arr2(&[[0.2, -0.1, 0.4], [0.7, 0.3, -0.5]]).into_dyn();
        let b0 = arr1(&[0.05, -0.02]).into_dyn();
        let eval = |x: &ArrayD<f64>, w: &ArrayD<f64>, b: &ArrayD<f64>| -> f64 {
            let x = x.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let w = w.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let b = b.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            let y = x.dot(&w.t()) + &b;
            y.mapv(|v| v * v).sum()
        };
        let mut t = Tape::recording();
        let x = t.constant(x0.clone());
        let w = t.constant(w0.clone());
        let b = t.constant(b0.clone());
        let y = t.linear(x, w, Some(b));
        let y2 = t.square(y);
        let s = t.sum_all(y2);
        let g = t.backward(s);
        let fd_w = fd_grad(|w| eval(&x0, w, &b0), &w0, 1e-6);
        let fd_x = fd_grad(|x| eval(x, &w0, &b0), &x0, 1e-6);
        let fd_b = fd_grad(|b| eval(&x0, &w0, b), &b0, 1e-6);
        assert_close(g.get(w).unwrap(), &fd_w, 1e-8);
        assert_close(g.get(x).unwrap(), &fd_x, 1e-8);
        assert_close(g.get(b).unwrap(), &fd_b, 1e-8);
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let x0 = arr2(&[[0.1, 1.2, -0.3], [2.0, 0.0, 0.5]]).into_dyn();
        let target = arr2(&[[1.0, 2.0, 3.0], [0.5, 0.1, 0.9]]);
        let f = |x: &ArrayD<f64>| -> f64 {
            let x = x.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let mut acc = 0.0;
            for (row, trow) in x.rows().into_iter().zip(target.rows()) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|a| (a - m).exp()).collect();
                let s: f64 = e.iter().sum();
                for (v, t) in e.iter().zip(trow.iter()) {
                    acc += (v / s) * t;
                }
            }
            acc
        };
        let mut t = Tape::recording();
        let x = t.constant(x0.clone());
        let y = t.softmax_axis1(x);
        let tv = t.constant(target.clone().into_dyn());
        let p = t.mul(y, tv);
        let s = t.sum_all(p);
        let g = t.backward(s);
        assert_close(g.get(x).unwrap(), &fd_grad(f, &x0, 1e-6), 1e-7);
    }

    #[test]
    fn concat_splits_gradient() {
        let a0 = arr2(&[[1.0], [2.0]]).into_dyn();
        let b0 = arr2(&[[3.0, 4.0], [5.0, 6.0]]).into_dyn();
        let mut t = Tape::recording();
        let a = t.constant(a0);
        let b = t.constant(b0);
        let c = t.concat(1, a, b);
        assert_eq!(t.value(c).shape(), &[2, 3]);
        let w = t.constant(arr2(&[[1.0, 10.0, 100.0], [2.0, 20.0, 200.0]]).into_dyn());
        let p = t.mul(c, w);
        let s = t.sum_all(p);
        let g = t.backward(s);
        assert_eq!(g.get(a).unwrap(), &arr2(&[[1.0], [2.0]]).into_dyn());
        assert_eq!(g.get(b).unwrap(), &arr2(&[[10.0, 100.0], [20.0, 200.0]]).into_dyn());
    }
}
