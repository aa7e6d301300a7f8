//! Forward and backward kernels for the differentiable operators.
//!
//! These are plain functions over [`Tensor`]s with no recording; the
//! [`Tape`](crate::tape::Tape) calls them and stores whatever the backward
//! pass needs. All convolutions are stride 1 with zero "same" padding of
//! `(k - 1) * dilation / 2` per side and run as im2col + SGEMM, one sample
//! at a time, in a fixed summation order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::Tensor;
use crate::Mode;

/// Denominator epsilon of batch normalization.
pub const BN_EPS: f32 = 1e-3;
/// Running-statistics momentum of batch normalization.
pub const BN_MOMENTUM: f32 = 0.99;

/// `c (m×n) = op(a) · op(b) + beta · c`, all buffers row-major.
///
/// `a` is `m×k` (or `k×m` when `a_t`), `b` is `k×n` (or `n×k` when `b_t`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every strided access for the given
    // dimensions, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of one same-padded convolution window sweep.
#[derive(Clone, Copy)]
struct Window {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    dilation: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn pad(&self) -> isize {
        ((self.kernel - 1) * self.dilation / 2) as isize
    }

    /// Column span `[x0, x1)` of output pixels whose tap at horizontal
    /// offset `ox` lands inside the image.
    fn valid_span(&self, ox: isize) -> (usize, usize) {
        let w = self.width as isize;
        let x0 = (-ox).clamp(0, w) as usize;
        let x1 = (w - ox).clamp(0, w) as usize;
        (x0, x1.max(x0))
    }

    /// Unfolds one `(C, H, W)` image into a `(C·k·k, H·W)` patch matrix.
    fn im2col(&self, src: &[f32], cols: &mut [f32]) {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = self.pad();
        for ch in 0..self.channels {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for ky in 0..k {
                let oy = (ky * self.dilation) as isize - pad;
                for kx in 0..k {
                    let ox = (kx * self.dilation) as isize - pad;
                    let row = (ch * k + ky) * k + kx;
                    let dst = &mut cols[row * h * w..(row + 1) * h * w];
                    let (x0, x1) = self.valid_span(ox);
                    for y in 0..h {
                        let out = &mut dst[y * w..(y + 1) * w];
                        let iy = y as isize + oy;
                        if iy < 0 || iy >= h as isize {
                            out.fill(0.0);
                            continue;
                        }
                        out[..x0].fill(0.0);
                        out[x1..].fill(0.0);
                        if x0 < x1 {
                            let start = iy as usize * w + (x0 as isize + ox) as usize;
                            out[x0..x1].copy_from_slice(&plane[start..start + (x1 - x0)]);
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters patch columns back onto the
    /// image, accumulating into `dst`.
    fn col2im(&self, cols: &[f32], dst: &mut [f32]) {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = self.pad();
        for ch in 0..self.channels {
            let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
            for ky in 0..k {
                let oy = (ky * self.dilation) as isize - pad;
                for kx in 0..k {
                    let ox = (kx * self.dilation) as isize - pad;
                    let row = (ch * k + ky) * k + kx;
                    let src = &cols[row * h * w..(row + 1) * h * w];
                    let (x0, x1) = self.valid_span(ox);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in 0..h {
                        let iy = y as isize + oy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let start = iy as usize * w + (x0 as isize + ox) as usize;
                        let target = &mut plane[start..start + (x1 - x0)];
                        for (t, s) in target.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                            *t += s;
                        }
                    }
                }
            }
        }
    }
}

fn check_kernel(kernel: usize, kernel_w: usize) -> Result<()> {
    if kernel != kernel_w {
        return Err(shape_err!("kernel must be square, got {}x{}", kernel, kernel_w));
    }
    if kernel % 2 == 0 {
        return Err(shape_err!("kernel size must be odd for same padding, got {}", kernel));
    }
    Ok(())
}

fn check_bias(bias: &Tensor, channels: usize) -> Result<()> {
    if bias.shape() != [channels] {
        return Err(shape_err!("bias must have shape [{}], got {:?}", channels, bias.shape()));
    }
    Ok(())
}

fn bias_grad(gout: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = gout.dims4()?;
    let plane = h * w;
    let g = gout.data();
    let data = (0..c)
        .map(|ch| {
            let mut acc = 0.0f64;
            for s in 0..n {
                let base = (s * c + ch) * plane;
                acc += g[base..base + plane].iter().map(|&v| v as f64).sum::<f64>();
            }
            acc as f32
        })
        .collect();
    Tensor::new(&[c], data)
}

fn fill_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (row, &b) in out.chunks_exact_mut(plane).zip(bias) {
        row.fill(b);
    }
}

/// Gradients of a (transposed) convolution with respect to its inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn conv2d_geometry(input: &Tensor, weight: &Tensor, dilation: usize) -> Result<(usize, usize, Window)> {
    let [n, cin, h, w] = input.dims4()?;
    let [cout, wcin, k, kw] = weight.dims4()?;
    check_kernel(k, kw)?;
    if wcin != cin {
        return Err(shape_err!("conv2d: input has {} channels, weights expect {}", cin, wcin));
    }
    if dilation == 0 {
        return Err(invalid_arg!("dilation must be positive"));
    }
    Ok((n, cout, Window { channels: cin, height: h, width: w, kernel: k, dilation }))
}

/// Same-padded, stride-1 cross-correlation.
///
/// `input` is `(N, Cin, H, W)`, `weight` is `(Cout, Cin, k, k)` and `bias`
/// is `(Cout)`; the output is `(N, Cout, H, W)`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let (n, cout, win) = conv2d_geometry(input, weight, dilation)?;
    check_bias(bias, cout)?;
    let (rows, plane) = (win.rows(), win.plane());
    let mut out = vec![0.0f32; n * cout * plane];
    let mut cols = vec![0.0f32; rows * plane];
    for s in 0..n {
        win.im2col(&input.data()[s * win.channels * plane..(s + 1) * win.channels * plane], &mut cols);
        let out_s = &mut out[s * cout * plane..(s + 1) * cout * plane];
        fill_bias(out_s, bias.data(), plane);
        gemm(cout, rows, plane, weight.data(), false, &cols, false, 1.0, out_s);
    }
    Tensor::new(&[n, cout, win.height, win.width], out)
}

pub fn conv2d_backward(input: &Tensor, weight: &Tensor, dilation: usize, gout: &Tensor) -> Result<ConvGrads> {
    let (n, cout, win) = conv2d_geometry(input, weight, dilation)?;
    if gout.shape() != [n, cout, win.height, win.width] {
        return Err(shape_err!("conv2d backward: gradient shape {:?}", gout.shape()));
    }
    let (rows, plane, cin) = (win.rows(), win.plane(), win.channels);
    let mut gx = vec![0.0f32; input.numel()];
    let mut gw = vec![0.0f32; weight.numel()];
    let mut cols = vec![0.0f32; rows * plane];
    let mut gcols = vec![0.0f32; rows * plane];
    for s in 0..n {
        win.im2col(&input.data()[s * cin * plane..(s + 1) * cin * plane], &mut cols);
        let g_s = &gout.data()[s * cout * plane..(s + 1) * cout * plane];
        gemm(cout, plane, rows, g_s, false, &cols, true, 1.0, &mut gw);
        gemm(rows, cout, plane, weight.data(), true, g_s, false, 0.0, &mut gcols);
        win.col2im(&gcols, &mut gx[s * cin * plane..(s + 1) * cin * plane]);
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gx)?,
        weight: Tensor::new(weight.shape(), gw)?,
        bias: bias_grad(gout)?,
    })
}

fn conv_transpose_geometry(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, Window)> {
    let [n, cin, h, w] = input.dims4()?;
    let [wcin, cout, k, kw] = weight.dims4()?;
    check_kernel(k, kw)?;
    if wcin != cin {
        return Err(shape_err!("conv_transpose2d: input has {} channels, weights expect {}", cin, wcin));
    }
    Ok((n, cin, Window { channels: cout, height: h, width: w, kernel: k, dilation: 1 }))
}

/// Same-padded, stride-1 transposed convolution: the adjoint of [`conv2d`]
/// for the same weight tensor.
///
/// `input` is `(N, Cin, H, W)`, `weight` is `(Cin, Cout, k, k)` and `bias`
/// is `(Cout)`; the output is `(N, Cout, H, W)`.
pub fn conv_transpose2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, cin, win) = conv_transpose_geometry(input, weight)?;
    let cout = win.channels;
    check_bias(bias, cout)?;
    let (rows, plane) = (win.rows(), win.plane());
    let mut out = vec![0.0f32; n * cout * plane];
    let mut cols = vec![0.0f32; rows * plane];
    for s in 0..n {
        let x_s = &input.data()[s * cin * plane..(s + 1) * cin * plane];
        gemm(rows, cin, plane, weight.data(), true, x_s, false, 0.0, &mut cols);
        let out_s = &mut out[s * cout * plane..(s + 1) * cout * plane];
        fill_bias(out_s, bias.data(), plane);
        win.col2im(&cols, out_s);
    }
    Tensor::new(&[n, cout, win.height, win.width], out)
}

pub fn conv_transpose2d_backward(input: &Tensor, weight: &Tensor, gout: &Tensor) -> Result<ConvGrads> {
    let (n, cin, win) = conv_transpose_geometry(input, weight)?;
    let cout = win.channels;
    if gout.shape() != [n, cout, win.height, win.width] {
        return Err(shape_err!("conv_transpose2d backward: gradient shape {:?}", gout.shape()));
    }
    let (rows, plane) = (win.rows(), win.plane());
    let mut gx = vec![0.0f32; input.numel()];
    let mut gw = vec![0.0f32; weight.numel()];
    let mut gcols = vec![0.0f32; rows * plane];
    for s in 0..n {
        win.im2col(&gout.data()[s * cout * plane..(s + 1) * cout * plane], &mut gcols);
        let x_s = &input.data()[s * cin * plane..(s + 1) * cin * plane];
        gemm(cin, rows, plane, weight.data(), false, &gcols, false, 0.0, &mut gx[s * cin * plane..(s + 1) * cin * plane]);
        gemm(cin, plane, rows, x_s, false, &gcols, true, 1.0, &mut gw);
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), gx)?,
        weight: Tensor::new(weight.shape(), gw)?,
        bias: bias_grad(gout)?,
    })
}

/// 2×2, stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat input index of the first maximum in row-major order.
/// NaN counts as the maximum so it propagates.
pub fn maxpool2d(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("maxpool2d needs even spatial dimensions, got {}x{}", h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let top = base + 2 * y * w + 2 * xo;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if x[idx] > x[best] || (x[idx].is_nan() && !x[best].is_nan()) {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, argmax))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], gout: &Tensor) -> Result<Tensor> {
    if argmax.len() != gout.numel() {
        return Err(shape_err!("maxpool2d backward: {} indices for {} gradients", argmax.len(), gout.numel()));
    }
    let mut gx = Tensor::zeros(input_shape);
    let g = gx.data_mut();
    for (&idx, &v) in argmax.iter().zip(gout.data()) {
        g[idx] += v;
    }
    Ok(gx)
}

/// Nearest-neighbour 2× upsampling: each pixel fills a 2×2 block.
pub fn upsample2x(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.dims4()?;
    let x = input.data();
    let ow = 2 * w;
    let mut out = vec![0.0f32; n * c * 4 * h * w];
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..h {
            let row = &mut dst[2 * y * ow..(2 * y + 1) * ow];
            for (pair, &v) in row.chunks_exact_mut(2).zip(&src[y * w..(y + 1) * w]) {
                pair.fill(v);
            }
            dst.copy_within(2 * y * ow..(2 * y + 1) * ow, (2 * y + 1) * ow);
        }
    }
    Tensor::new(&[n, c, 2 * h, 2 * w], out)
}

pub fn upsample2x_backward(gout: &Tensor) -> Result<Tensor> {
    let [n, c, oh, ow] = gout.dims4()?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(shape_err!("upsample2x backward: odd gradient size {}x{}", oh, ow));
    }
    let (h, w) = (oh / 2, ow / 2);
    let g = gout.data();
    let mut gx = vec![0.0f32; n * c * h * w];
    for plane in 0..n * c {
        let src = &g[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..h {
            for x in 0..w {
                let tl = 2 * y * ow + 2 * x;
                gx[plane * h * w + y * w + x] = src[tl] + src[tl + 1] + src[tl + ow] + src[tl + ow + 1];
            }
        }
    }
    Tensor::new(&[n, c, h, w], gx)
}

/// Per-channel batch statistics (biased variance) of an `(N, C, H, W)` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

fn check_affine(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<[usize; 4]> {
    let dims = input.dims4()?;
    let c = dims[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err!(
            "batchnorm2d: gamma {:?} / beta {:?} do not match {} channels",
            gamma.shape(),
            beta.shape(),
            c
        ));
    }
    Ok(dims)
}

/// Per-channel batch mean and biased variance.
pub fn batch_stats(input: &Tensor) -> Result<BatchStats> {
    let [n, c, h, w] = input.dims4()?;
    let plane = h * w;
    let count = (n * plane) as f64;
    if n * plane < 2 {
        return Err(shape_err!("batchnorm2d in train mode needs at least 2 values per channel"));
    }
    let x = input.data();
    let mut mean = Vec::with_capacity(c);
    let mut var = Vec::with_capacity(c);
    for ch in 0..c {
        let planes = || (0..n).map(move |s| &x[(s * c + ch) * plane..(s * c + ch + 1) * plane]);
        let mu = planes().flat_map(|p| p.iter()).map(|&v| v as f64).sum::<f64>() / count;
        let sq = planes().flat_map(|p| p.iter()).map(|&v| (v as f64 - mu) * (v as f64 - mu)).sum::<f64>();
        mean.push(mu as f32);
        var.push((sq / count) as f32);
    }
    Ok(BatchStats { mean, var })
}

fn normalize(input: &Tensor, gamma: &Tensor, beta: &Tensor, mean: &[f32], inv_std: &[f32]) -> Result<Tensor> {
    let [n, c, h, w] = input.dims4()?;
    let plane = h * w;
    let mut out = input.data().to_vec();
    for (i, chunk) in out.chunks_exact_mut(plane).enumerate() {
        let ch = i % c;
        let (m, s, g, b) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
        for v in chunk {
            *v = g * ((*v - m) * s) + b;
        }
    }
    Tensor::new(&[n, c, h, w], out)
}

fn inv_std(var: &[f32]) -> Vec<f32> {
    var.iter().map(|&v| 1.0 / libm::sqrtf(v + BN_EPS)).collect()
}

/// Batch normalization with batch statistics. Returns the output and the
/// statistics used, so the caller can update its running averages.
pub fn batchnorm2d_train(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, BatchStats)> {
    check_affine(input, gamma, beta)?;
    let stats = batch_stats(input)?;
    let out = normalize(input, gamma, beta, &stats.mean, &inv_std(&stats.var))?;
    Ok((out, stats))
}

/// Batch normalization with fixed (running) statistics.
pub fn batchnorm2d_eval(input: &Tensor, gamma: &Tensor, beta: &Tensor, mean: &Tensor, var: &Tensor) -> Result<Tensor> {
    let [_, c, _, _] = check_affine(input, gamma, beta)?;
    if mean.shape() != [c] || var.shape() != [c] {
        return Err(shape_err!("batchnorm2d: running statistics do not match {} channels", c));
    }
    normalize(input, gamma, beta, mean.data(), &inv_std(var.data()))
}

/// Exponential moving average update of running statistics.
pub fn update_running_stats(mean: &mut Tensor, var: &mut Tensor, batch: &BatchStats) -> Result<()> {
    if mean.numel() != batch.mean.len() || var.numel() != batch.var.len() {
        return Err(shape_err!("running statistics do not match batch statistics"));
    }
    for (r, &b) in mean.data_mut().iter_mut().zip(&batch.mean) {
        *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
    }
    for (r, &b) in var.data_mut().iter_mut().zip(&batch.var) {
        *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
    }
    Ok(())
}

/// Batch normalization in either mode, updating the running statistics in
/// place when training.
pub fn batchnorm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    mode: Mode,
) -> Result<Tensor> {
    match mode {
        Mode::Train => {
            let (out, stats) = batchnorm2d_train(input, gamma, beta)?;
            update_running_stats(running_mean, running_var, &stats)?;
            Ok(out)
        }
        Mode::Eval => batchnorm2d_eval(input, gamma, beta, running_mean, running_var),
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Backward pass of batch normalization. With `batch_statistics` the mean
/// and variance are functions of the input (train mode); otherwise they
/// are constants (eval mode).
pub fn batchnorm2d_backward(
    input: &Tensor,
    gamma: &Tensor,
    stats: &BatchStats,
    batch_statistics: bool,
    gout: &Tensor,
) -> Result<BatchNormGrads> {
    let [n, c, h, w] = input.dims4()?;
    if gout.shape() != input.shape() {
        return Err(shape_err!("batchnorm2d backward: gradient shape {:?}", gout.shape()));
    }
    let plane = h * w;
    let count = (n * plane) as f64;
    let inv = inv_std(&stats.var);
    let (x, g) = (input.data(), gout.data());
    let mut gx = vec![0.0f32; x.len()];
    let mut ggamma = vec![0.0f32; c];
    let mut gbeta = vec![0.0f32; c];
    for ch in 0..c {
        let (m, s, gm) = (stats.mean[ch], inv[ch], gamma.data()[ch]);
        let offsets = (0..n).map(|smp| (smp * c + ch) * plane);
        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
        for base in offsets.clone() {
            for i in base..base + plane {
                let xhat = (x[i] - m) * s;
                sum_g += g[i] as f64;
                sum_gx += (g[i] * xhat) as f64;
            }
        }
        ggamma[ch] = sum_gx as f32;
        gbeta[ch] = sum_g as f32;
        let scale = gm * s;
        for base in offsets {
            for i in base..base + plane {
                gx[i] = if batch_statistics {
                    let xhat = (x[i] - m) * s;
                    scale * (g[i] - (sum_g / count) as f32 - xhat * (sum_gx / count) as f32)
                } else {
                    scale * g[i]
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(input.shape(), gx)?,
        gamma: Tensor::new(&[c], ggamma)?,
        beta: Tensor::new(&[c], gbeta)?,
    })
}

/// `max(x, 0)`, passing NaN through.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
}

/// Passes the gradient where the input is strictly positive.
pub fn relu_backward(input: &Tensor, gout: &Tensor) -> Result<Tensor> {
    zip_with(input, gout, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::expf(-x))
    } else {
        let e = libm::expf(x);
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

/// Backward pass of the sigmoid given its output `s`: `g · s · (1 − s)`.
pub fn sigmoid_backward(output: &Tensor, gout: &Tensor) -> Result<Tensor> {
    zip_with(output, gout, |s, g| g * s * (1.0 - s))
}

pub fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err!("element-wise operands {:?} and {:?} differ", a.shape(), b.shape()));
    }
    Tensor::new(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, |x, y| x * y)
}

/// Concatenates `(N, Ci, H, W)` tensors along the channel axis.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
    let [n, _, h, w] = first.dims4()?;
    let mut channels = Vec::with_capacity(inputs.len());
    for t in inputs {
        let [tn, tc, th, tw] = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(shape_err!("concat: {:?} does not match {:?}", t.shape(), first.shape()));
        }
        channels.push(tc);
    }
    let total: usize = channels.iter().sum();
    let plane = h * w;
    let mut out = Vec::with_capacity(n * total * plane);
    for s in 0..n {
        for (t, &c) in inputs.iter().zip(&channels) {
            out.extend_from_slice(&t.data()[s * c * plane..(s + 1) * c * plane]);
        }
    }
    Tensor::new(&[n, total, h, w], out)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn split_channels(gout: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, h, w] = gout.dims4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(shape_err!("split of {} channels into {:?}", c, channels));
    }
    let plane = h * w;
    let g = gout.data();
    let mut offset = 0;
    let mut parts = Vec::with_capacity(channels.len());
    for &ci in channels {
        let mut data = Vec::with_capacity(n * ci * plane);
        for s in 0..n {
            let start = (s * c + offset) * plane;
            data.extend_from_slice(&g[start..start + ci * plane]);
        }
        parts.push(Tensor::new(&[n, ci, h, w], data)?);
        offset += ci;
    }
    Ok(parts)
}

/// Mean of squared element differences, accumulated in `f64`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f32> {
    if !pred.same_shape(target) {
        return Err(shape_err!("mse: prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok((sum / pred.numel() as f64) as f32)
}

/// Gradient of [`mse`] with respect to the prediction, scaled by `gout`.
pub fn mse_backward(pred: &Tensor, target: &Tensor, gout: f32) -> Result<Tensor> {
    let scale = 2.0 * gout / pred.numel() as f32;
    zip_with(pred, target, |p, t| scale * (p - t))
}
