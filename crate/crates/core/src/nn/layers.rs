//! Forward and backward kernels for the layer types the networks use.
//!
//! Image tensors are `[batch, channels, height, width]`. Convolutions lower to
//! GEMM through im2col; per-sample work runs through [`crate::par`] and
//! per-sample weight gradients are summed afterwards in batch order.

use crate::par;

use super::tensor::{gemm, Real, Tensor};

/// Geometry of a square-kernel convolution mapping `(h, w)` to `(oh, ow)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Geometry of a forward convolution over a `channels x h x w` image.
    pub fn conv(channels: usize, h: usize, w: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        if h + 2 * pad < kernel || w + 2 * pad < kernel || stride == 0 {
            return None;
        }
        let oh = (h + 2 * pad - kernel) / stride + 1;
        let ow = (w + 2 * pad - kernel) / stride + 1;
        Some(Self { channels, h, w, kernel, stride, pad, oh, ow })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Real>(img: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.col_cols();
    let mut cols = vec![T::zero(); g.col_rows() * p];
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = ((c * g.kernel + ky) * g.kernel + kx) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            cols[row + oy * g.ow + ox] = img[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.col_cols();
    let mut img = vec![T::zero(); g.channels * g.h * g.w];
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = ((c * g.kernel + ky) * g.kernel + kx) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            img[dst + ix as usize] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    img
}

fn sum_in_order<T: Real>(parts: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for part in parts {
        for (a, v) in acc.iter_mut().zip(part) {
            *a += v;
        }
    }
    acc
}

/// `y = x W^T + b` for `x: [n, in]`, `W: [out, in]`.
pub fn linear_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, inp) = (x.batch(), x.sample_len());
    let out = w.shape()[0];
    let mut y = vec![T::zero(); n * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b.data());
    }
    gemm(n, inp, out, x.data(), false, w.data(), true, &mut y, true);
    Tensor::from_vec(&[n, out], y).expect("linear shape")
}

/// Returns `(dx, dW, db)`.
pub fn linear_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, gy: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, inp) = (x.batch(), x.sample_len());
    let out = w.shape()[0];
    let mut gx = vec![T::zero(); n * inp];
    gemm(n, out, inp, gy.data(), false, w.data(), false, &mut gx, false);
    let mut gw = vec![T::zero(); out * inp];
    gemm(out, n, inp, gy.data(), true, x.data(), false, &mut gw, false);
    let mut gb = vec![T::zero(); out];
    for row in gy.data().chunks_exact(out) {
        for (g, v) in gb.iter_mut().zip(row) {
            *g += *v;
        }
    }
    (
        Tensor::from_vec(x.shape(), gx).expect("dx"),
        Tensor::from_vec(w.shape(), gw).expect("dW"),
        Tensor::from_vec(&[out], gb).expect("db"),
    )
}

fn image_dims<T: Real>(x: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

/// Convolution with `W: [out_c, in_c, k, k]`.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let (n, c, h, wd) = image_dims(x);
    let (oc, k) = (w.shape()[0], w.shape()[2]);
    let g = ConvGeom::conv(c, h, wd, k, stride, pad).expect("conv geometry");
    let p = g.oh * g.ow;
    let outs = par::map_range(n, |i| {
        let cols = im2col(x.sample(i), &g);
        let mut y = vec![T::zero(); oc * p];
        for (row, bias) in y.chunks_exact_mut(p).zip(b.data()) {
            row.fill(*bias);
        }
        gemm(oc, g.col_rows(), p, w.data(), false, &cols, false, &mut y, true);
        y
    });
    Tensor::from_vec(&[n, oc, g.oh, g.ow], outs.concat()).expect("conv output")
}

/// Returns `(dx, dW, db)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c, h, wd) = image_dims(x);
    let (oc, k) = (w.shape()[0], w.shape()[2]);
    let g = ConvGeom::conv(c, h, wd, k, stride, pad).expect("conv geometry");
    let (rows, p) = (g.col_rows(), g.col_cols());
    let per_sample = par::map_range(n, |i| {
        let cols = im2col(x.sample(i), &g);
        let gyi = gy.sample(i);
        let mut gw = vec![T::zero(); oc * rows];
        gemm(oc, p, rows, gyi, false, &cols, true, &mut gw, false);
        let mut gcols = vec![T::zero(); rows * p];
        gemm(rows, oc, p, w.data(), true, gyi, false, &mut gcols, false);
        (col2im(&gcols, &g), gw)
    });
    let (gx, gws): (Vec<Vec<T>>, Vec<Vec<T>>) = per_sample.into_iter().unzip();
    let gw = sum_in_order(gws, oc * rows);
    (
        Tensor::from_vec(x.shape(), gx.concat()).expect("dx"),
        Tensor::from_vec(w.shape(), gw).expect("dW"),
        channel_sums(gy),
    )
}

/// Output side of a transposed convolution.
pub fn conv_transpose_out(side: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (side - 1) * stride + kernel - 2 * pad
}

/// Transposed convolution with `W: [in_c, out_c, k, k]`.
pub fn conv_transpose2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (n, ic, h, wd) = image_dims(x);
    let (oc, k) = (w.shape()[1], w.shape()[2]);
    let (oh, ow) = (conv_transpose_out(h, k, stride, pad), conv_transpose_out(wd, k, stride, pad));
    let g = ConvGeom { channels: oc, h: oh, w: ow, kernel: k, stride, pad, oh: h, ow: wd };
    let plane = oh * ow;
    let outs = par::map_range(n, |i| {
        let mut cols = vec![T::zero(); g.col_rows() * h * wd];
        gemm(g.col_rows(), ic, h * wd, w.data(), true, x.sample(i), false, &mut cols, false);
        let mut y = col2im(&cols, &g);
        for (chan, bias) in y.chunks_exact_mut(plane).zip(b.data()) {
            chan.iter_mut().for_each(|v| *v += *bias);
        }
        y
    });
    Tensor::from_vec(&[n, oc, oh, ow], outs.concat()).expect("conv transpose output")
}

/// Returns `(dx, dW, db)`.
pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, ic, h, wd) = image_dims(x);
    let (oc, k) = (w.shape()[1], w.shape()[2]);
    let (oh, ow) = (conv_transpose_out(h, k, stride, pad), conv_transpose_out(wd, k, stride, pad));
    let g = ConvGeom { channels: oc, h: oh, w: ow, kernel: k, stride, pad, oh: h, ow: wd };
    let rows = g.col_rows();
    let hw = h * wd;
    let per_sample = par::map_range(n, |i| {
        let gcols = im2col(gy.sample(i), &g);
        let mut gx = vec![T::zero(); ic * hw];
        gemm(ic, rows, hw, w.data(), false, &gcols, false, &mut gx, false);
        let mut gw = vec![T::zero(); ic * rows];
        gemm(ic, hw, rows, x.sample(i), false, &gcols, true, &mut gw, false);
        (gx, gw)
    });
    let (gx, gws): (Vec<Vec<T>>, Vec<Vec<T>>) = per_sample.into_iter().unzip();
    let gw = sum_in_order(gws, ic * rows);
    (
        Tensor::from_vec(x.shape(), gx.concat()).expect("dx"),
        Tensor::from_vec(w.shape(), gw).expect("dW"),
        channel_sums(gy),
    )
}

/// Sum over every axis except the channel axis (axis 1).
fn channel_sums<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let (n, c) = (t.shape()[0], t.shape()[1]);
    let spatial: usize = t.shape()[2..].iter().product();
    let mut out = vec![T::zero(); c];
    for i in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let start = (i * c + ch) * spatial;
            *o += t.data()[start..start + spatial].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(&[c], out).expect("channel sums")
}

pub const BN_EPS: f64 = 1e-5;

/// Saved state of a training-mode batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Per-channel normalization over batch and spatial axes using batch statistics.
pub fn batch_norm_train<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> (Tensor<T>, BatchNormCache<T>) {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let count = (n * spatial) as f64;
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * spatial;
            mean[ch] += x.data()[start..start + spatial].iter().map(|v| v.f64()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * spatial;
            var[ch] += x.data()[start..start + spatial].iter().map(|v| (v.f64() - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + BN_EPS).sqrt())).collect();
    let mut xhat = x.clone();
    let mut y = x.clone();
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * spatial;
            let m = T::lit(mean[ch]);
            for j in start..start + spatial {
                let h = (x.data()[j] - m) * inv_std[ch];
                xhat.data_mut()[j] = h;
                y.data_mut()[j] = gamma.data()[ch] * h + beta.data()[ch];
            }
        }
    }
    (y, BatchNormCache { xhat, inv_std, batch_mean: mean, batch_var: var })
}

/// Normalization with fixed statistics (inference mode).
pub fn batch_norm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &Tensor<T>,
    var: &Tensor<T>,
) -> Tensor<T> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let mut y = x.clone();
    for ch in 0..c {
        let inv = T::one() / (var.data()[ch] + T::lit(BN_EPS)).sqrt();
        let (g, b, m) = (gamma.data()[ch], beta.data()[ch], mean.data()[ch]);
        for i in 0..n {
            let start = (i * c + ch) * spatial;
            for v in &mut y.data_mut()[start..start + spatial] {
                *v = g * (*v - m) * inv + b;
            }
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)` for a training-mode pass.
pub fn batch_norm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    gy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (gy.shape()[0], gy.shape()[1]);
    let spatial: usize = gy.shape()[2..].iter().product();
    let count = (n * spatial) as f64;
    let mut sum_gy = vec![0.0f64; c];
    let mut sum_gy_xhat = vec![0.0f64; c];
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * spatial;
            for j in start..start + spatial {
                let g = gy.data()[j].f64();
                sum_gy[ch] += g;
                sum_gy_xhat[ch] += g * cache.xhat.data()[j].f64();
            }
        }
    }
    let mut gx = gy.clone();
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * spatial;
            let scale = gamma.data()[ch].f64() * cache.inv_std[ch].f64() / count;
            for j in start..start + spatial {
                let v = count * gy.data()[j].f64() - sum_gy[ch] - cache.xhat.data()[j].f64() * sum_gy_xhat[ch];
                gx.data_mut()[j] = T::lit(scale * v);
            }
        }
    }
    let to_t = |v: Vec<f64>| Tensor::from_vec(&[c], v.into_iter().map(T::lit).collect()).expect("bn grads");
    (gx, to_t(sum_gy_xhat), to_t(sum_gy))
}

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

pub fn leaky_relu_backward<T: Real>(x: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    let data = x.data().iter().zip(gy.data()).map(|(&v, &g)| if v > T::zero() { g } else { g * slope }).collect();
    Tensor::from_vec(x.shape(), data).expect("lrelu grad")
}

pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient through a sigmoid given its output `y`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let data = y.data().iter().zip(gy.data()).map(|(&s, &g)| g * s * (T::one() - s)).collect();
    Tensor::from_vec(y.shape(), data).expect("sigmoid grad")
}
