//! Layer kernels: forward and backward passes over NCHW f64 tensors.
//!
//! Forward passes never mutate layer state. Batch norm returns its batch
//! statistics to the caller, which decides when to fold them into the
//! running estimates.

use ndarray::{Array1, Array2, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// NCHW activation tensor.
pub type Tensor = Array4<f64>;

/// 2-D convolution with square stride and zero padding.
///
/// Weight layout is `(c_out, c_in, kh, kw)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn out_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().1
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (_, _, kh, kw) = self.w.dim();
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < kh || wp < kw {
            return Err(Error::Shape(format!(
                "conv kernel {kh}x{kw} larger than padded input {hp}x{wp}"
            )));
        }
        Ok(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, cin, h, w) = x.dim();
        let (cout, cin_w, kh, kw) = self.w.dim();
        assert_eq!(cin, cin_w, "conv input channels");
        let (oh, ow) = self.out_hw(h, w).expect("validated at build");
        let w2 = self
            .w
            .view()
            .into_shape((cout, cin * kh * kw))
            .expect("conv weight is contiguous");
        let mut y = Array4::zeros((n, cout, oh, ow));
        for s in 0..n {
            let cols = im2col(x.index_axis(Axis(0), s), kh, kw, self.stride, self.pad);
            let y2 = w2.dot(&cols);
            let mut ys = y.index_axis_mut(Axis(0), s);
            for c in 0..cout {
                let bias = self.b[c];
                for i in 0..oh {
                    for j in 0..ow {
                        ys[[c, i, j]] = y2[[c, i * ow + j]] + bias;
                    }
                }
            }
        }
        y
    }

    /// Returns `(dx, dw, db)` for upstream gradient `gy`.
    pub fn backward(&self, x: &Tensor, gy: &Tensor) -> (Tensor, Array4<f64>, Array1<f64>) {
        let (n, cin, h, w) = x.dim();
        let (cout, _, kh, kw) = self.w.dim();
        let (_, _, oh, ow) = gy.dim();
        let w2 = self
            .w
            .view()
            .into_shape((cout, cin * kh * kw))
            .expect("conv weight is contiguous");
        let mut dx = Array4::zeros((n, cin, h, w));
        let mut dw2 = Array2::<f64>::zeros((cout, cin * kh * kw));
        let mut db = Array1::<f64>::zeros(cout);
        for s in 0..n {
            let cols = im2col(x.index_axis(Axis(0), s), kh, kw, self.stride, self.pad);
            let gs = gy.index_axis(Axis(0), s);
            let mut g2 = Array2::<f64>::zeros((cout, oh * ow));
            for c in 0..cout {
                for i in 0..oh {
                    for j in 0..ow {
                        let v = gs[[c, i, j]];
                        g2[[c, i * ow + j]] = v;
                        db[c] += v;
                    }
                }
            }
            dw2 = dw2 + g2.dot(&cols.t());
            let dcols = w2.t().dot(&g2);
            col2im_into(
                &dcols,
                dx.index_axis_mut(Axis(0), s),
                kh,
                kw,
                self.stride,
                self.pad,
            );
        }
        let dw = dw2.into_shape((cout, cin, kh, kw)).expect("same element count");
        (dx, dw, db)
    }
}

fn im2col(x: ArrayView3<f64>, kh: usize, kw: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (cin, h, w) = x.dim();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut cols = Array2::zeros((cin * kh * kw, oh * ow));
    for c in 0..cin {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[[row, oi * ow + oj]] = x[[c, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_into(
    cols: &Array2<f64>,
    mut x: ndarray::ArrayViewMut3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let (cin, h, w) = x.dim();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    for c in 0..cin {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        x[[c, ii as usize, jj as usize]] += cols[[row, oi * ow + oj]];
                    }
                }
            }
        }
    }
}

/// 2-D transposed convolution; weight layout is `(c_in, c_out, kh, kw)`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
}

impl ConvTranspose2d {
    pub fn out_channels(&self) -> usize {
        self.w.dim().1
    }

    pub fn in_channels(&self) -> usize {
        self.w.dim().0
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (_, _, kh, kw) = self.w.dim();
        ((h - 1) * self.stride + kh, (w - 1) * self.stride + kw)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, cin, h, w) = x.dim();
        let (cin_w, cout, kh, kw) = self.w.dim();
        assert_eq!(cin, cin_w, "conv transpose input channels");
        let (oh, ow) = self.out_hw(h, w);
        let mut y = Array4::zeros((n, cout, oh, ow));
        for s in 0..n {
            for co in 0..cout {
                let bias = self.b[co];
                y.slice_mut(ndarray::s![s, co, .., ..]).fill(bias);
            }
            for ci in 0..cin {
                for i in 0..h {
                    for j in 0..w {
                        let v = x[[s, ci, i, j]];
                        if v == 0.0 {
                            continue;
                        }
                        for co in 0..cout {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    y[[s, co, i * self.stride + ki, j * self.stride + kj]] +=
                                        v * self.w[[ci, co, ki, kj]];
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Tensor, gy: &Tensor) -> (Tensor, Array4<f64>, Array1<f64>) {
        let (n, cin, h, w) = x.dim();
        let (_, cout, kh, kw) = self.w.dim();
        let mut dx = Array4::zeros((n, cin, h, w));
        let mut dw = Array4::zeros(self.w.dim());
        let mut db = Array1::zeros(cout);
        for s in 0..n {
            for co in 0..cout {
                db[co] += gy.slice(ndarray::s![s, co, .., ..]).sum();
            }
            for ci in 0..cin {
                for i in 0..h {
                    for j in 0..w {
                        let xv = x[[s, ci, i, j]];
                        let mut acc = 0.0;
                        for co in 0..cout {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let g =
                                        gy[[s, co, i * self.stride + ki, j * self.stride + kj]];
                                    acc += g * self.w[[ci, co, ki, kj]];
                                    dw[[ci, co, ki, kj]] += g * xv;
                                }
                            }
                        }
                        dx[[s, ci, i, j]] = acc;
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

/// Per-channel batch normalization.
///
/// `momentum` is the retention factor for running statistics:
/// `running = momentum * running + (1 - momentum) * batch`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Values cached by a batch norm forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Array1<f64>,
    pub batch_mode: bool,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    /// Normalizes with batch statistics; returns `(y, cache, (mean, var))`.
    ///
    /// The caller owns folding the returned batch statistics into the
    /// running estimates via [`BatchNorm2d::update_running`].
    pub fn forward_train(&self, x: &Tensor) -> (Tensor, BnCache, (Array1<f64>, Array1<f64>)) {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f64;
        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ch in 0..c {
            let slab = x.slice(ndarray::s![.., ch, .., ..]);
            let m = slab.sum() / count;
            let v = slab.iter().map(|&xv| (xv - m) * (xv - m)).sum::<f64>() / count;
            mean[ch] = m;
            var[ch] = v;
        }
        let (y, cache) = self.normalize(x, &mean, &var, true);
        (y, cache, (mean, var))
    }

    /// Normalizes with the stored running statistics.
    pub fn forward_infer(&self, x: &Tensor) -> (Tensor, BnCache) {
        let (y, cache) = self.normalize(x, &self.running_mean, &self.running_var, false);
        (y, cache)
    }

    fn normalize(
        &self,
        x: &Tensor,
        mean: &Array1<f64>,
        var: &Array1<f64>,
        batch_mode: bool,
    ) -> (Tensor, BnCache) {
        let (n, c, h, w) = x.dim();
        let mut xhat = Array4::zeros((n, c, h, w));
        let mut y = Array4::zeros((n, c, h, w));
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        for s in 0..n {
            for ch in 0..c {
                let (m, inv, g, b) = (mean[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
                for i in 0..h {
                    for j in 0..w {
                        let xh = (x[[s, ch, i, j]] - m) * inv;
                        xhat[[s, ch, i, j]] = xh;
                        y[[s, ch, i, j]] = g * xh + b;
                    }
                }
            }
        }
        (y, BnCache { xhat, inv_std, batch_mode })
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BnCache, gy: &Tensor) -> (Tensor, Array1<f64>, Array1<f64>) {
        let (n, c, h, w) = gy.dim();
        let count = (n * h * w) as f64;
        let mut dgamma = Array1::zeros(c);
        let mut dbeta = Array1::zeros(c);
        for s in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let g = gy[[s, ch, i, j]];
                        dgamma[ch] += g * cache.xhat[[s, ch, i, j]];
                        dbeta[ch] += g;
                    }
                }
            }
        }
        let mut dx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let (gam, inv) = (self.gamma[ch], cache.inv_std[ch]);
            if cache.batch_mode {
                let mean_g = dbeta[ch] / count;
                let mean_gx = dgamma[ch] / count;
                for s in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            let g = gy[[s, ch, i, j]];
                            let xh = cache.xhat[[s, ch, i, j]];
                            dx[[s, ch, i, j]] = gam * inv * (g - mean_g - xh * mean_gx);
                        }
                    }
                }
            } else {
                for s in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            dx[[s, ch, i, j]] = gam * inv * gy[[s, ch, i, j]];
                        }
                    }
                }
            }
        }
        (dx, dgamma, dbeta)
    }

    pub fn update_running(&mut self, batch_mean: &Array1<f64>, batch_var: &Array1<f64>) {
        let m = self.momentum;
        for ch in 0..self.running_mean.len() {
            self.running_mean[ch] = m * self.running_mean[ch] + (1.0 - m) * batch_mean[ch];
            self.running_var[ch] = m * self.running_var[ch] + (1.0 - m) * batch_var[ch];
        }
    }
}

/// Square max pooling with zero-free padding (padded positions are simply
/// skipped, never selected).
pub fn maxpool_forward(x: &Tensor, k: usize, s: usize, pad: usize) -> (Tensor, Array4<usize>) {
    let (n, c, h, w) = x.dim();
    let oh = (h + 2 * pad - k) / s + 1;
    let ow = (w + 2 * pad - k) / s + 1;
    let mut y = Array4::zeros((n, c, oh, ow));
    let mut arg = Array4::zeros((n, c, oh, ow));
    for sn in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ki in 0..k {
                        let ii = (oi * s + ki) as isize - pad as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for kj in 0..k {
                            let jj = (oj * s + kj) as isize - pad as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            let v = x[[sn, ch, ii as usize, jj as usize]];
                            if v > best {
                                best = v;
                                best_idx = ii as usize * w + jj as usize;
                            }
                        }
                    }
                    y[[sn, ch, oi, oj]] = best;
                    arg[[sn, ch, oi, oj]] = best_idx;
                }
            }
        }
    }
    (y, arg)
}

/// Square average pooling (no padding); divisor is the full window size.
pub fn avgpool_forward(x: &Tensor, k: usize, s: usize) -> Tensor {
    let (n, c, h, w) = x.dim();
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let inv = 1.0 / (k * k) as f64;
    let mut y = Array4::zeros((n, c, oh, ow));
    for sn in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = 0.0;
                    for ki in 0..k {
                        for kj in 0..k {
                            acc += x[[sn, ch, oi * s + ki, oj * s + kj]];
                        }
                    }
                    y[[sn, ch, oi, oj]] = acc * inv;
                }
            }
        }
    }
    y
}

pub fn avgpool_backward(gy: &Tensor, k: usize, s: usize, h: usize, w: usize) -> Tensor {
    let (n, c, oh, ow) = gy.dim();
    let inv = 1.0 / (k * k) as f64;
    let mut dx = Array4::zeros((n, c, h, w));
    for sn in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let g = gy[[sn, ch, oi, oj]] * inv;
                    for ki in 0..k {
                        for kj in 0..k {
                            dx[[sn, ch, oi * s + ki, oj * s + kj]] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

pub fn maxpool_backward(gy: &Tensor, arg: &Array4<usize>, h: usize, w: usize) -> Tensor {
    let (n, c, oh, ow) = gy.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    for sn in 0..n {
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let idx = arg[[sn, ch, oi, oj]];
                    dx[[sn, ch, idx / w, idx % w]] += gy[[sn, ch, oi, oj]];
                }
            }
        }
    }
    dx
}

/// Spatial mean per channel, producing `(n, c, 1, 1)`.
pub fn global_avg_pool_forward(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, 1, 1));
    for s in 0..n {
        for ch in 0..c {
            y[[s, ch, 0, 0]] = x.slice(ndarray::s![s, ch, .., ..]).sum() / (h * w) as f64;
        }
    }
    y
}

pub fn global_avg_pool_backward(gy: &Tensor, h: usize, w: usize) -> Tensor {
    let (n, c, _, _) = gy.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    let scale = 1.0 / (h * w) as f64;
    for s in 0..n {
        for ch in 0..c {
            let g = gy[[s, ch, 0, 0]] * scale;
            dx.slice_mut(ndarray::s![s, ch, .., ..]).fill(g);
        }
    }
    dx
}

/// Fully connected layer over the flattened `(c, h, w)` volume.
///
/// Weight layout is `(out_features, in_features)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        let (out, inf) = self.w.dim();
        assert_eq!(c * h * w, inf, "dense input features");
        let x2 = x.view().into_shape((n, inf)).expect("contiguous activations");
        let mut y2 = x2.dot(&self.w.t());
        for mut row in y2.rows_mut() {
            row += &self.b;
        }
        y2.into_shape((n, out, 1, 1)).expect("same element count")
    }

    pub fn backward(&self, x: &Tensor, gy: &Tensor) -> (Tensor, Array2<f64>, Array1<f64>) {
        let (n, c, h, w) = x.dim();
        let (out, inf) = self.w.dim();
        let x2 = x.view().into_shape((n, inf)).expect("contiguous activations");
        let g2 = gy.view().into_shape((n, out)).expect("contiguous gradient");
        let dw = g2.t().dot(&x2);
        let db = g2.sum_axis(Axis(0));
        let dx2 = g2.dot(&self.w);
        (dx2.into_shape((n, c, h, w)).expect("same element count"), dw, db)
    }
}

/// Samples an inverted-dropout mask: entries are `0` with probability `p`,
/// otherwise `1 / (1 - p)`.
pub fn dropout_mask(dim: (usize, usize, usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let scale = 1.0 / (1.0 - p);
    let mut mask = Array4::zeros(dim);
    for v in mask.iter_mut() {
        *v = if rng.gen::<f64>() < p { 0.0 } else { scale };
    }
    mask
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.mapv(|v| v.max(0.0))
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Softmax over the channel axis; requires a `(n, c, 1, 1)` tensor.
pub fn softmax_forward(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dim();
    assert_eq!((h, w), (1, 1), "softmax expects pooled activations");
    let mut y = Array4::zeros((n, c, 1, 1));
    for s in 0..n {
        let mut maxv = f64::NEG_INFINITY;
        for ch in 0..c {
            maxv = maxv.max(x[[s, ch, 0, 0]]);
        }
        let mut denom = 0.0;
        for ch in 0..c {
            let e = (x[[s, ch, 0, 0]] - maxv).exp();
            y[[s, ch, 0, 0]] = e;
            denom += e;
        }
        for ch in 0..c {
            y[[s, ch, 0, 0]] /= denom;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use rand_chacha::rand_core::SeedableRng;

    fn t3x3() -> Tensor {
        Array4::from_shape_vec((1, 1, 3, 3), (1..=9).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn conv_matches_hand_computed_window_sums() {
        // Kernel [[1,0],[0,1]] sums x[i,j] + x[i+1,j+1].
        let x = t3x3();
        let w = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let conv = Conv2d { w, b: arr1(&[0.5]), stride: 1, pad: 0 };
        let y = conv.forward(&x);
        let expect = [[6.5, 8.5], [12.5, 14.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(y[[0, 0, i, j]], expect[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv_delta_kernel_with_padding_is_identity() {
        let x = t3x3();
        let mut w = Array4::zeros((1, 1, 3, 3));
        w[[0, 0, 1, 1]] = 1.0;
        let conv = Conv2d { w, b: arr1(&[0.0]), stride: 1, pad: 1 };
        let y = conv.forward(&x);
        for (a, b) in y.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_stride_two_downsamples() {
        let x = t3x3();
        let w = Array4::from_shape_vec((1, 1, 1, 1), vec![2.0]).unwrap();
        let conv = Conv2d { w, b: arr1(&[0.0]), stride: 2, pad: 0 };
        let y = conv.forward(&x);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(y[[0, 0, 0, 0]], 2.0);
        assert_eq!(y[[0, 0, 1, 1]], 18.0);
    }

    #[test]
    fn conv_transpose_2x2_stride_2_tiles_blocks() {
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0; 4]).unwrap();
        let ct = ConvTranspose2d { w, b: arr1(&[0.0]), stride: 2 };
        let y = ct.forward(&x);
        assert_eq!(y.dim(), (1, 1, 4, 4));
        let expect = [
            [1.0, 1.0, 2.0, 2.0],
            [1.0, 1.0, 2.0, 2.0],
            [3.0, 3.0, 4.0, 4.0],
            [3.0, 3.0, 4.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(y[[0, 0, i, j]], expect[i][j]);
            }
        }
    }

    #[test]
    fn maxpool_tracks_argmax_for_backward() {
        let x = Array4::from_shape_vec(
            (1, 1, 2, 4),
            vec![1.0, 2.0, 8.0, 3.0, 4.0, 0.0, 5.0, 6.0],
        )
        .unwrap();
        let (y, arg) = maxpool_forward(&x, 2, 2, 0);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        assert_eq!(y[[0, 0, 0, 1]], 8.0);
        let gy = Array4::from_elem((1, 1, 1, 2), 1.0);
        let dx = maxpool_backward(&gy, &arg, 2, 4);
        assert_eq!(dx[[0, 0, 1, 0]], 1.0);
        assert_eq!(dx[[0, 0, 0, 2]], 1.0);
        assert_eq!(dx.sum(), 2.0);
    }

    #[test]
    fn padded_maxpool_matches_resnet_stem_arithmetic() {
        // 6x6 -> k3 s2 pad1 -> 3x3, mirroring the 112 -> 56 stem reduction.
        let x = Array4::from_shape_fn((1, 1, 6, 6), |(_, _, i, j)| (i * 6 + j) as f64);
        let (y, _) = maxpool_forward(&x, 3, 2, 1);
        assert_eq!(y.dim(), (1, 1, 3, 3));
        // Top-left window covers rows/cols -1..=1, max over in-bounds cells.
        assert_eq!(y[[0, 0, 0, 0]], 7.0);
        assert_eq!(y[[0, 0, 2, 2]], 35.0);
    }

    #[test]
    fn avgpool_averages_and_spreads_gradient_evenly() {
        let x = Array4::from_shape_vec(
            (1, 1, 2, 4),
            vec![1.0, 2.0, 8.0, 3.0, 4.0, 0.0, 5.0, 6.0],
        )
        .unwrap();
        let y = avgpool_forward(&x, 2, 2);
        assert_eq!(y[[0, 0, 0, 0]], 1.75);
        assert_eq!(y[[0, 0, 0, 1]], 5.5);
        let gy = Array4::from_elem((1, 1, 1, 2), 4.0);
        let dx = avgpool_backward(&gy, 2, 2, 2, 4);
        assert!(dx.iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn batchnorm_train_whitens_per_channel() {
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bn = BatchNorm2d::new(1);
        let (y, _, (mean, var)) = bn.forward_train(&x);
        assert_abs_diff_eq!(mean[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(var[0], 1.25, epsilon = 1e-12);
        let n = (1 * 2 * 2) as f64;
        assert_abs_diff_eq!(y.sum() / n, 0.0, epsilon = 1e-12);
        let e2 = y.iter().map(|v| v * v).sum::<f64>() / n;
        // Normalized variance is slightly below 1 because of eps.
        assert_abs_diff_eq!(e2, 1.25 / (1.25 + 1e-5), epsilon = 1e-9);
    }

    #[test]
    fn batchnorm_infer_uses_running_stats() {
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0;
        let x = Array4::from_elem((1, 1, 1, 1), 6.0);
        let (y, _) = bn.forward_infer(&x);
        // (6 - 2) / sqrt(4 + 1e-5)
        assert_abs_diff_eq!(y[[0, 0, 0, 0]], 4.0 / (4.0 + 1e-5f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn batchnorm_running_update_blends() {
        let mut bn = BatchNorm2d::new(1);
        bn.update_running(&arr1(&[10.0]), &arr1(&[5.0]));
        assert_abs_diff_eq!(bn.running_mean[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bn.running_var[0], 0.9 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dropout_mask_is_seeded_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m1 = dropout_mask((1, 2, 4, 4), 0.4, &mut rng);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let m2 = dropout_mask((1, 2, 4, 4), 0.4, &mut rng2);
        assert_eq!(m1, m2);
        for &v in m1.iter() {
            assert!(v == 0.0 || (v - 1.0 / 0.6).abs() < 1e-12);
        }
        let mut rng3 = ChaCha8Rng::seed_from_u64(8);
        let m3 = dropout_mask((1, 2, 4, 4), 0.4, &mut rng3);
        assert_ne!(m1, m3);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_order_is_preserved() {
        let x = Array4::from_shape_vec((1, 3, 1, 1), vec![1.0, 3.0, 2.0]).unwrap();
        let y = softmax_forward(&x);
        let s: f64 = (0..3).map(|c| y[[0, c, 0, 0]]).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        assert!(y[[0, 1, 0, 0]] > y[[0, 2, 0, 0]]);
        assert!(y[[0, 2, 0, 0]] > y[[0, 0, 0, 0]]);
    }

    #[test]
    fn dense_matches_hand_computed_affine() {
        let x = Array4::from_shape_vec((1, 2, 1, 1), vec![1.0, 2.0]).unwrap();
        let d = Dense {
            w: Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            b: arr1(&[0.5, -0.5]),
        };
        let y = d.forward(&x);
        assert_abs_diff_eq!(y[[0, 0, 0, 0]], 5.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y[[0, 1, 0, 0]], 10.5, epsilon = 1e-12);
    }
}
