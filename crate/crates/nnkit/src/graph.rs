//! Reverse-mode automatic differentiation over a recorded operation list.

use std::collections::HashMap;

use crate::error::shape_err;
use crate::kernels::{self, ConvGeom};
use crate::{Gradients, NnError, ParamId, ParamStore, Scalar, Tensor};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Silu,
    Sigmoid,
    Exp,
    Abs,
    Square,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv3d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Upsample2 {
        x: Var,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        means: Vec<f64>,
        rstds: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Unary {
        x: Var,
        kind: Unary,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: T,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Concat {
        xs: Vec<Var>,
    },
    Slice {
        x: Var,
        start: usize,
    },
    ChannelBias {
        x: Var,
        bias: Var,
    },
    Sum {
        x: Var,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Records operations as they execute and differentiates them in reverse.
///
/// A graph is built for one forward pass and discarded after
/// [`Graph::backward`]. Parameters enter through [`Graph::param`], which
/// copies the current value from a [`ParamStore`].
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), NnError> {
    if a != b {
        return Err(shape_err(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn five_d(op: &'static str, s: &[usize]) -> Result<[usize; 5], NnError> {
    s.try_into()
        .map_err(|_| shape_err(op, format!("expected [batch, channel, depth, height, width], got {s:?}")))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An input whose gradient is wanted (used by gradient checks).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// The current value of a stored parameter. Repeated calls return the
    /// same variable.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    /// Makes later [`Graph::param`] calls for `id` return `v`, so a
    /// parameter can be driven by an arbitrary variable (gradient checks).
    pub fn bind_param(&mut self, id: ParamId, v: Var) {
        self.params.insert(id, v);
    }

    /// Copies the value of `x` into a new constant, cutting the gradient.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.clone();
        self.constant(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// 3D convolution with `same`-style padding `k / 2`. `w` has shape
    /// `[cout, cin, k, k, k]`, `b` shape `[cout]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var, NnError> {
        let [n, cin, d, h, wd] = five_d("conv3d", self.shape(x))?;
        let ws = self.shape(w);
        if ws.len() != 5 || ws[1] != cin || ws[2] != ws[3] || ws[3] != ws[4] || ws[2] % 2 == 0 {
            return Err(shape_err(
                "conv3d",
                format!("weight {ws:?} incompatible with input {:?}", self.shape(x)),
            ));
        }
        if stride == 0 {
            return Err(shape_err("conv3d", "stride must be positive"));
        }
        let (cout, k) = (ws[0], ws[2]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(shape_err("conv3d", format!("bias {:?} for {cout} outputs", self.shape(b))));
            }
        }
        let geom = ConvGeom::new(cin, cout, k, stride, [d, h, wd]);
        let [od, oh, ow] = geom.out_dims;
        let mut y = vec![T::zero(); n * cout * od * oh * ow];
        kernels::conv3d_forward(
            &geom,
            n,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &mut y,
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(&[n, cout, od, oh, ow], y)?;
        Ok(self.push(value, Op::Conv3d { x, w, b, geom }, needs))
    }

    /// Nearest-neighbour upsampling by 2 along each spatial axis.
    pub fn upsample2(&mut self, x: Var) -> Result<Var, NnError> {
        let [n, c, d, h, w] = five_d("upsample2", self.shape(x))?;
        let mut y = vec![T::zero(); n * c * 8 * d * h * w];
        kernels::upsample2_forward(n * c, [d, h, w], self.value(x).data(), &mut y);
        let value = Tensor::new(&[n, c, 2 * d, 2 * h, 2 * w], y)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Upsample2 { x }, needs))
    }

    /// Group normalization with per-channel affine `gamma`, `beta`.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(shape_err("group_norm", format!("input {s:?} has no channel axis")));
        }
        let (n, c) = (s[0], s[1]);
        if groups == 0 || c % groups != 0 {
            return Err(shape_err("group_norm", format!("{c} channels not divisible into {groups} groups")));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err(
                "group_norm",
                format!("affine {:?}/{:?} for {c} channels", self.shape(gamma), self.shape(beta)),
            ));
        }
        let spatial = self.value(x).spatial_len();
        let mut y = vec![T::zero(); self.value(x).len()];
        let (means, rstds) = kernels::group_norm_forward(
            n,
            c,
            spatial,
            groups,
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            &mut y,
        );
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let value = Tensor::new(&s, y)?;
        Ok(self.push(
            value,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                means,
                rstds,
            },
            needs,
        ))
    }

    /// `y = x wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err("linear", format!("input {xs:?}, weight {ws:?}")));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut y = vec![T::zero(); n * dout];
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(shape_err("linear", format!("bias {:?} for {dout} outputs", self.shape(b))));
            }
            let bv = self.value(b).data();
            for row in y.chunks_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        T::gemm(
            n,
            din,
            dout,
            T::one(),
            self.value(x).data(),
            (din as isize, 1),
            self.value(w).data(),
            (1, din as isize),
            T::one(),
            &mut y,
            (dout as isize, 1),
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(&[n, dout], y)?, Op::Linear { x, w, b }, needs))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let f = |v: f64| -> f64 {
            match kind {
                Unary::Silu => v / (1.0 + (-v).exp()),
                Unary::Sigmoid => 1.0 / (1.0 + (-v).exp()),
                Unary::Exp => v.exp(),
                Unary::Abs => v.abs(),
                Unary::Square => v * v,
            }
        };
        let value = self.value(x).map(|v| T::from_f64(f(v.as_f64())));
        let needs = self.needs(x);
        self.push(value, Op::Unary { x, kind }, needs)
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Silu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var, NnError> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (T::from_f64(scale), T::from_f64(shift));
        let value = self.value(x).map(|v| v * s + t);
        let needs = self.needs(x);
        self.push(value, Op::Affine { x, scale: s }, needs)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        let needs = self.needs(x);
        self.push(value, Op::Clamp { x, lo, hi }, needs)
    }

    /// Concatenates along the channel axis (axis 1).
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        let first = xs.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if base.len() < 2 {
            return Err(shape_err("concat", format!("input {base:?} has no channel axis")));
        }
        let mut channels = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return Err(shape_err("concat", format!("{s:?} vs {base:?}")));
            }
            channels += s[1];
        }
        let n = base[0];
        let spatial: usize = base[2..].iter().product();
        let mut data = Vec::with_capacity(n * channels * spatial);
        for i in 0..n {
            for &x in xs {
                let v = self.value(x);
                let c = v.shape()[1];
                data.extend_from_slice(&v.data()[i * c * spatial..(i + 1) * c * spatial]);
            }
        }
        let mut shape = base.clone();
        shape[1] = channels;
        let needs = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat { xs: xs.to_vec() }, needs))
    }

    /// Channels `start..start + len` of `x`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || start + len > s[1] || len == 0 {
            return Err(shape_err("slice_channels", format!("channels {start}..{} of {s:?}", start + len)));
        }
        let spatial: usize = s[2..].iter().product();
        let c = s[1];
        let mut data = Vec::with_capacity(s[0] * len * spatial);
        for i in 0..s[0] {
            let off = (i * c + start) * spatial;
            data.extend_from_slice(&self.value(x).data()[off..off + len * spatial]);
        }
        let mut shape = s.clone();
        shape[1] = len;
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Slice { x, start }, needs))
    }

    /// Adds a per-sample, per-channel value (`bias: [n, c]`) at every voxel.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || self.shape(bias) != [s[0], s[1]] {
            return Err(shape_err(
                "add_channel_bias",
                format!("bias {:?} for input {s:?}", self.shape(bias)),
            ));
        }
        let spatial: usize = s[2..].iter().product();
        let bv = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for (i, chunk) in value.data_mut().chunks_mut(spatial.max(1)).enumerate() {
            let b = bv[i];
            chunk.iter_mut().for_each(|v| *v = *v + b);
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::ChannelBias { x, bias }, needs))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(T::from_f64(total)), Op::Sum { x }, needs)
    }

    /// Mean of all entries.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Builds `[n, d, spatial...]` by looking up one row of `table: [k, d]`
    /// per voxel. `indices` lists rows sample-major, voxels x-fastest.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize], shape: &[usize]) -> Result<Var, NnError> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || shape.len() < 2 || shape[1] != ts[1] {
            return Err(shape_err("gather_rows", format!("table {ts:?} into {shape:?}")));
        }
        let (n, d) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        if indices.len() != n * spatial || indices.iter().any(|&i| i >= ts[0]) {
            return Err(shape_err("gather_rows", format!("{} indices for {shape:?}", indices.len())));
        }
        let tv = self.value(table).data();
        let mut data = vec![T::zero(); n * d * spatial];
        for i in 0..n {
            for s in 0..spatial {
                let row = indices[i * spatial + s];
                for c in 0..d {
                    data[(i * d + c) * spatial + s] = tv[row * d + c];
                }
            }
        }
        let needs = self.needs(table);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            needs,
        ))
    }

    /// Back-propagates from a one-element output.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", format!("loss has shape {:?}", self.shape(loss))));
        }
        self.backward_from(&[(loss, Tensor::full(self.shape(loss), T::one()))])
    }

    /// Back-propagates explicit output gradients (several outputs allowed).
    pub fn backward_from(&mut self, seeds: &[(Var, Tensor<T>)]) -> Result<(), NnError> {
        let mut last = 0;
        for (v, g) in seeds {
            same_shape("backward", self.shape(*v), g.shape())?;
            self.accumulate(*v, g.clone());
            last = last.max(v.0);
        }
        for i in (0..=last).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contributions = self.local_backward(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, t) in contributions {
                self.accumulate(v, t);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(t) => t.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn local_backward(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[i];
        let gd = g.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv3d { x, w, b, geom } => {
                let n = self.shape(*x)[0];
                let mut dw = vec![T::zero(); self.value(*w).len()];
                let mut db = b.map(|_| vec![T::zero(); geom.cout]);
                let mut dx = self.needs(*x).then(|| vec![T::zero(); self.value(*x).len()]);
                kernels::conv3d_backward(
                    geom,
                    n,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    &mut dw,
                    db.as_deref_mut(),
                    dx.as_deref_mut(),
                );
                out.push((*w, Tensor::new(self.shape(*w), dw).expect("weight shape")));
                if let (Some(b), Some(db)) = (b, db) {
                    out.push((*b, Tensor::new(self.shape(*b), db).expect("bias shape")));
                }
                if let Some(dx) = dx {
                    out.push((*x, Tensor::new(self.shape(*x), dx).expect("input shape")));
                }
            }
            Op::Upsample2 { x } => {
                let [n, c, d, h, w] = five_d("upsample2", self.shape(*x)).expect("checked on forward");
                let mut dx = vec![T::zero(); self.value(*x).len()];
                kernels::upsample2_backward(n * c, [d, h, w], gd, &mut dx);
                out.push((*x, Tensor::new(self.shape(*x), dx).expect("input shape")));
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                means,
                rstds,
            } => {
                let s = self.shape(*x);
                let (n, c) = (s[0], s[1]);
                let spatial = self.value(*x).spatial_len();
                let mut dx = self.needs(*x).then(|| vec![T::zero(); self.value(*x).len()]);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                kernels::group_norm_backward(
                    n,
                    c,
                    spatial,
                    *groups,
                    self.value(*x).data(),
                    self.value(*gamma).data(),
                    means,
                    rstds,
                    gd,
                    dx.as_deref_mut(),
                    &mut dgamma,
                    &mut dbeta,
                );
                let to_t = |v: Vec<f64>| Tensor::new(&[c], v.into_iter().map(T::from_f64).collect()).expect("affine shape");
                out.push((*gamma, to_t(dgamma)));
                out.push((*beta, to_t(dbeta)));
                if let Some(dx) = dx {
                    out.push((*x, Tensor::new(s, dx).expect("input shape")));
                }
            }
            Op::Linear { x, w, b } => {
                let (n, din) = (self.shape(*x)[0], self.shape(*x)[1]);
                let dout = self.shape(*w)[0];
                let mut dw = vec![T::zero(); dout * din];
                // dW = dYᵀ X
                T::gemm(dout, n, din, T::one(), gd, (1, dout as isize), self.value(*x).data(), (din as isize, 1), T::zero(), &mut dw, (din as isize, 1));
                out.push((*w, Tensor::new(&[dout, din], dw).expect("weight shape")));
                if let Some(b) = b {
                    let mut db = vec![T::zero(); dout];
                    for row in gd.chunks(dout) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a = *a + v;
                        }
                    }
                    out.push((*b, Tensor::new(&[dout], db).expect("bias shape")));
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * din];
                    T::gemm(n, dout, din, T::one(), gd, (dout as isize, 1), self.value(*w).data(), (din as isize, 1), T::zero(), &mut dx, (din as isize, 1));
                    out.push((*x, Tensor::new(&[n, din], dx).expect("input shape")));
                }
            }
            Op::Unary { x, kind } => {
                let xv = self.value(*x).data();
                let yv = node.value.data();
                let dx: Vec<T> = (0..xv.len())
                    .map(|k| {
                        let (xi, yi, gi) = (xv[k].as_f64(), yv[k].as_f64(), gd[k].as_f64());
                        let d = match kind {
                            Unary::Silu => {
                                let s = 1.0 / (1.0 + (-xi).exp());
                                s * (1.0 + xi * (1.0 - s))
                            }
                            Unary::Sigmoid => yi * (1.0 - yi),
                            Unary::Exp => yi,
                            Unary::Abs => {
                                if xi > 0.0 {
                                    1.0
                                } else if xi < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Square => 2.0 * xi,
                        };
                        T::from_f64(gi * d)
                    })
                    .collect();
                out.push((*x, Tensor::new(self.shape(*x), dx).expect("input shape")));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let d = gd.iter().zip(bv).map(|(&p, &q)| p * q).collect();
                    out.push((*a, Tensor::new(self.shape(*a), d).expect("shape")));
                }
                if self.needs(*b) {
                    let d = gd.iter().zip(av).map(|(&p, &q)| p * q).collect();
                    out.push((*b, Tensor::new(self.shape(*b), d).expect("shape")));
                }
            }
            Op::Affine { x, scale } => out.push((*x, g.map(|v| v * *scale))),
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi < *lo || xi > *hi { T::zero() } else { gi })
                    .collect();
                out.push((*x, Tensor::new(self.shape(*x), d).expect("shape")));
            }
            Op::Concat { xs } => {
                let s = g.shape();
                let n = s[0];
                let spatial: usize = s[2..].iter().product();
                let total_c = s[1];
                let mut start = 0;
                for &x in xs {
                    let c = self.shape(x)[1];
                    if self.needs(x) {
                        let mut d = Vec::with_capacity(n * c * spatial);
                        for i in 0..n {
                            let off = (i * total_c + start) * spatial;
                            d.extend_from_slice(&gd[off..off + c * spatial]);
                        }
                        out.push((x, Tensor::new(self.shape(x), d).expect("shape")));
                    }
                    start += c;
                }
            }
            Op::Slice { x, start } => {
                let s = self.shape(*x);
                let (n, c) = (s[0], s[1]);
                let len = g.shape()[1];
                let spatial: usize = s[2..].iter().product();
                let mut d = vec![T::zero(); self.value(*x).len()];
                for i in 0..n {
                    let off = (i * c + start) * spatial;
                    d[off..off + len * spatial].copy_from_slice(&gd[i * len * spatial..(i + 1) * len * spatial]);
                }
                out.push((*x, Tensor::new(s, d).expect("shape")));
            }
            Op::ChannelBias { x, bias } => {
                let s = self.shape(*x);
                let spatial: usize = s[2..].iter().product::<usize>().max(1);
                let db = gd.chunks(spatial).map(|ch| ch.iter().copied().sum::<T>()).collect();
                out.push((*bias, Tensor::new(self.shape(*bias), db).expect("shape")));
                out.push((*x, g.clone()));
            }
            Op::Sum { x } => {
                out.push((*x, Tensor::full(self.shape(*x), gd[0])));
            }
            Op::Gather { table, indices } => {
                let ts = self.shape(*table);
                let d = ts[1];
                let s = g.shape();
                let n = s[0];
                let spatial: usize = s[2..].iter().product();
                let mut dt = vec![T::zero(); ts[0] * d];
                for i in 0..n {
                    for sp in 0..spatial {
                        let row = indices[i * spatial + sp];
                        for c in 0..d {
                            dt[row * d + c] = dt[row * d + c] + gd[(i * d + c) * spatial + sp];
                        }
                    }
                }
                out.push((*table, Tensor::new(ts, dt).expect("shape")));
            }
        }
        out.retain(|(v, _)| self.needs(*v));
        out
    }

    /// Gradients of every parameter that entered through [`Graph::param`].
    pub fn param_grads(&self, store: &ParamStore<T>) -> Gradients<T> {
        let mut grads = Gradients::empty(store.len());
        let mut entries: Vec<_> = self.params.iter().collect();
        entries.sort();
        for (&id, &v) in entries {
            if let Some(g) = &self.nodes[v.0].grad {
                grads.accumulate(id, g);
            }
        }
        grads
    }
}
