//! Raw forward/backward kernels on channel-major buffers. Spatial layout is
//! `[depth, height, width]` with width fastest.

use std::ops::Range;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_dims: [usize; 3],
    pub out_dims: [usize; 3],
}

impl ConvGeom {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, in_dims: [usize; 3]) -> Self {
        let pad = k / 2;
        let out_dims = in_dims.map(|d| (d + 2 * pad - k) / stride + 1);
        Self {
            cin,
            cout,
            k,
            stride,
            pad,
            in_dims,
            out_dims,
        }
    }

    pub fn rows(&self) -> usize {
        self.cin * self.k * self.k * self.k
    }

    pub fn in_len(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

/// Unfolds one sample `x` (`cin × in_len`) into `cols` (`rows × out_len`).
fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], slab: Range<usize>, cols: &mut [T]) {
    let [d, h, w] = g.in_dims;
    let [_, oh, ow] = g.out_dims;
    let (k, s) = (g.k, g.stride);
    let p = slab.len() * oh * ow;
    let mut row = 0;
    for ci in 0..g.cin {
        let xc = &x[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let (lo, hi) = valid_range(ow, w, s, kx, g.pad);
                    for (zi, oz) in slab.clone().enumerate() {
                        let iz = (oz * s + kz).wrapping_sub(g.pad);
                        for oy in 0..oh {
                            let iy = (oy * s + ky).wrapping_sub(g.pad);
                            let out = &mut dst[(zi * oh + oy) * ow..(zi * oh + oy + 1) * ow];
                            if iz >= d || iy >= h {
                                out.fill(T::zero());
                                continue;
                            }
                            let src = &xc[(iz * h + iy) * w..(iz * h + iy + 1) * w];
                            out[..lo].fill(T::zero());
                            out[hi..].fill(T::zero());
                            let first = lo * s + kx - g.pad;
                            if s == 1 {
                                out[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                            } else {
                                for (o, v) in out[lo..hi].iter_mut().zip(src[first..].iter().step_by(s)) {
                                    *o = *v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose input column `o·s + kx − pad` lies in `0..w`.
fn valid_range(ow: usize, w: usize, s: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(s) };
    // largest o with o·s + kx − pad ≤ w − 1
    let hi = if w + pad > kx { ((w + pad - kx - 1) / s + 1).min(ow) } else { 0 };
    (lo.min(hi), hi)
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx`.
fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], slab: Range<usize>, dx: &mut [T]) {
    let [d, h, w] = g.in_dims;
    let [_, oh, ow] = g.out_dims;
    let (k, s) = (g.k, g.stride);
    let p = slab.len() * oh * ow;
    let mut row = 0;
    for ci in 0..g.cin {
        let xc = &mut dx[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let src = &cols[row * p..(row + 1) * p];
                    let (lo, hi) = valid_range(ow, w, s, kx, g.pad);
                    for (zi, oz) in slab.clone().enumerate() {
                        let iz = (oz * s + kz).wrapping_sub(g.pad);
                        for oy in 0..oh {
                            let iy = (oy * s + ky).wrapping_sub(g.pad);
                            if iz >= d || iy >= h || lo == hi {
                                continue;
                            }
                            let from = &src[(zi * oh + oy) * ow + lo..(zi * oh + oy) * ow + hi];
                            let first = lo * s + kx - g.pad;
                            let to = &mut xc[(iz * h + iy) * w..(iz * h + iy + 1) * w];
                            if s == 1 {
                                for (t, v) in to[first..first + from.len()].iter_mut().zip(from) {
                                    *t = *t + *v;
                                }
                            } else {
                                for (t, v) in to[first..].iter_mut().step_by(s).zip(from) {
                                    *t = *t + *v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Output z-slabs sized so one slab of columns stays cache resident.
fn slabs(g: &ConvGeom) -> impl Iterator<Item = Range<usize>> {
    const TARGET: usize = 1 << 16;
    let [od, oh, ow] = g.out_dims;
    let per_slice = (g.rows() * oh * ow).max(1);
    let step = (TARGET / per_slice).clamp(1, od.max(1));
    (0..od).step_by(step).map(move |z| z..(z + step).min(od))
}

/// `y[n] = W · im2col(x[n]) + b` for every sample.
pub(crate) fn conv3d_forward<T: Scalar>(g: &ConvGeom, batch: usize, x: &[T], w: &[T], b: Option<&[T]>, y: &mut [T]) {
    let (rows, p, il) = (g.rows(), g.out_len(), g.in_len());
    let plane = g.out_dims[1] * g.out_dims[2];
    let mut cols = Vec::new();
    for n in 0..batch {
        let xn = &x[n * g.cin * il..(n + 1) * g.cin * il];
        let yn = &mut y[n * g.cout * p..(n + 1) * g.cout * p];
        match b {
            Some(b) => {
                for (c, chunk) in yn.chunks_mut(p).enumerate() {
                    chunk.fill(b[c]);
                }
            }
            None => yn.fill(T::zero()),
        }
        if g.is_pointwise() {
            T::gemm(g.cout, rows, p, T::one(), w, (rows as isize, 1), xn, (p as isize, 1), T::one(), yn, (p as isize, 1));
            continue;
        }
        for slab in slabs(g) {
            let q = slab.len() * plane;
            cols.resize(rows * q, T::zero());
            im2col(g, xn, slab.clone(), &mut cols);
            let out = &mut yn[slab.start * plane..];
            T::gemm(g.cout, rows, q, T::one(), w, (rows as isize, 1), &cols, (q as isize, 1), T::one(), out, (p as isize, 1));
        }
    }
}

/// Accumulates weight/bias gradients and, when requested, the input
/// gradient of [`conv3d_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3d_backward<T: Scalar>(
    g: &ConvGeom,
    batch: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: Option<&mut [T]>,
    mut dx: Option<&mut [T]>,
) {
    let (rows, p, il) = (g.rows(), g.out_len(), g.in_len());
    let plane = g.out_dims[1] * g.out_dims[2];
    let (mut cols, mut dcols) = (Vec::new(), Vec::new());
    if let Some(db) = db {
        for n in 0..batch {
            let dyn_ = &dy[n * g.cout * p..(n + 1) * g.cout * p];
            for (c, chunk) in dyn_.chunks(p).enumerate() {
                db[c] = db[c] + chunk.iter().copied().sum::<T>();
            }
        }
    }
    for n in 0..batch {
        let xn = &x[n * g.cin * il..(n + 1) * g.cin * il];
        let dyn_ = &dy[n * g.cout * p..(n + 1) * g.cout * p];
        if g.is_pointwise() {
            // dW += dY · Xᵀ, dX += Wᵀ · dY
            T::gemm(g.cout, p, rows, T::one(), dyn_, (p as isize, 1), xn, (1, p as isize), T::one(), dw, (rows as isize, 1));
            if let Some(dx) = dx.as_deref_mut() {
                let dxn = &mut dx[n * g.cin * il..(n + 1) * g.cin * il];
                T::gemm(rows, g.cout, p, T::one(), w, (1, rows as isize), dyn_, (p as isize, 1), T::one(), dxn, (p as isize, 1));
            }
            continue;
        }
        for slab in slabs(g) {
            let q = slab.len() * plane;
            let dys = &dyn_[slab.start * plane..];
            cols.resize(rows * q, T::zero());
            im2col(g, xn, slab.clone(), &mut cols);
            // dW += dY · colsᵀ
            T::gemm(g.cout, q, rows, T::one(), dys, (p as isize, 1), &cols, (1, q as isize), T::one(), dw, (rows as isize, 1));
            if let Some(dx) = dx.as_deref_mut() {
                let dxn = &mut dx[n * g.cin * il..(n + 1) * g.cin * il];
                dcols.resize(rows * q, T::zero());
                T::gemm(rows, g.cout, q, T::one(), w, (1, rows as isize), dys, (p as isize, 1), T::zero(), &mut dcols, (q as isize, 1));
                col2im(g, &dcols, slab, dxn);
            }
        }
    }
}

/// Nearest-neighbour ×2 upsampling of `planes` channel volumes.
pub(crate) fn upsample2_forward<T: Scalar>(planes: usize, dims: [usize; 3], x: &[T], y: &mut [T]) {
    let [d, h, w] = dims;
    let (oh, ow) = (2 * h, 2 * w);
    let ol = 8 * d * h * w;
    for c in 0..planes {
        let xc = &x[c * d * h * w..(c + 1) * d * h * w];
        let yc = &mut y[c * ol..(c + 1) * ol];
        for z in 0..2 * d {
            for yy in 0..oh {
                let src = &xc[((z / 2) * h + yy / 2) * w..((z / 2) * h + yy / 2 + 1) * w];
                let dst = &mut yc[(z * oh + yy) * ow..(z * oh + yy + 1) * ow];
                for (x2, v) in dst.iter_mut().enumerate() {
                    *v = src[x2 / 2];
                }
            }
        }
    }
}

pub(crate) fn upsample2_backward<T: Scalar>(planes: usize, dims: [usize; 3], dy: &[T], dx: &mut [T]) {
    let [d, h, w] = dims;
    let (oh, ow) = (2 * h, 2 * w);
    let ol = 8 * d * h * w;
    for c in 0..planes {
        let dxc = &mut dx[c * d * h * w..(c + 1) * d * h * w];
        let dyc = &dy[c * ol..(c + 1) * ol];
        for z in 0..2 * d {
            for yy in 0..oh {
                let dst = &mut dxc[((z / 2) * h + yy / 2) * w..((z / 2) * h + yy / 2 + 1) * w];
                let src = &dyc[(z * oh + yy) * ow..(z * oh + yy + 1) * ow];
                for (x2, &v) in src.iter().enumerate() {
                    dst[x2 / 2] = dst[x2 / 2] + v;
                }
            }
        }
    }
}

pub(crate) const GROUP_NORM_EPS: f64 = 1e-5;

/// Group normalization over `[batch, channels, spatial]`. Returns the
/// per-(sample, group) mean and reciprocal standard deviation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_forward<T: Scalar>(
    batch: usize,
    channels: usize,
    spatial: usize,
    groups: usize,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    y: &mut [T],
) -> (Vec<f64>, Vec<f64>) {
    let cpg = channels / groups;
    let glen = cpg * spatial;
    let mut means = Vec::with_capacity(batch * groups);
    let mut rstds = Vec::with_capacity(batch * groups);
    for n in 0..batch {
        for gi in 0..groups {
            let off = (n * channels + gi * cpg) * spatial;
            let xs = &x[off..off + glen];
            let mean = xs.iter().map(|v| v.as_f64()).sum::<f64>() / glen as f64;
            let var = xs.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / glen as f64;
            let rstd = 1.0 / (var + GROUP_NORM_EPS).sqrt();
            for c in 0..cpg {
                let ch = gi * cpg + c;
                let (ga, be) = (gamma[ch].as_f64(), beta[ch].as_f64());
                let base = off + c * spatial;
                for s in 0..spatial {
                    let xh = (x[base + s].as_f64() - mean) * rstd;
                    y[base + s] = T::from_f64(xh * ga + be);
                }
            }
            means.push(mean);
            rstds.push(rstd);
        }
    }
    (means, rstds)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_backward<T: Scalar>(
    batch: usize,
    channels: usize,
    spatial: usize,
    groups: usize,
    x: &[T],
    gamma: &[T],
    means: &[f64],
    rstds: &[f64],
    dy: &[T],
    dx: Option<&mut [T]>,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let cpg = channels / groups;
    let glen = cpg * spatial;
    let mut dx = dx;
    for n in 0..batch {
        for gi in 0..groups {
            let off = (n * channels + gi * cpg) * spatial;
            let (mean, rstd) = (means[n * groups + gi], rstds[n * groups + gi]);
            let mut sum_dxh = 0.0;
            let mut sum_dxh_xh = 0.0;
            for c in 0..cpg {
                let ch = gi * cpg + c;
                let ga = gamma[ch].as_f64();
                let base = off + c * spatial;
                let (mut dg, mut dbt) = (0.0, 0.0);
                for s in 0..spatial {
                    let xh = (x[base + s].as_f64() - mean) * rstd;
                    let g = dy[base + s].as_f64();
                    dg += g * xh;
                    dbt += g;
                    sum_dxh += g * ga;
                    sum_dxh_xh += g * ga * xh;
                }
                dgamma[ch] += dg;
                dbeta[ch] += dbt;
            }
            if let Some(dx) = dx.as_deref_mut() {
                let m1 = sum_dxh / glen as f64;
                let m2 = sum_dxh_xh / glen as f64;
                for c in 0..cpg {
                    let ga = gamma[gi * cpg + c].as_f64();
                    let base = off + c * spatial;
                    for s in 0..spatial {
                        let xh = (x[base + s].as_f64() - mean) * rstd;
                        let dxh = dy[base + s].as_f64() * ga;
                        let v = rstd * (dxh - m1 - xh * m2);
                        dx[base + s] = dx[base + s] + T::from_f64(v);
                    }
                }
            }
        }
    }
}
