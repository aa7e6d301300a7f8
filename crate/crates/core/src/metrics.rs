//! PSNR, SSIM and mean ± standard-deviation aggregation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of normalized images.
pub const SSIM_RANGE: f64 = 1.0;

/// Peak signal-to-noise ratio in dB, `10·log10(max²/MSE)`.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(reference: &Tensor, test: &Tensor, max_value: f64) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(shape_err!("psnr: {:?} vs {:?}", reference.shape(), test.shape()));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&r, &t)| {
            let d = r as f64 - t as f64;
            d * d
        })
        .sum();
    let mse = sum / reference.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(max_value * max_value / mse))
}

fn single_plane(t: &Tensor) -> Result<(usize, usize)> {
    let shape = t.shape();
    let (lead, hw) = shape.split_at(shape.len().saturating_sub(2));
    if hw.len() != 2 || lead.iter().any(|&d| d != 1) {
        return Err(shape_err!("ssim expects a single-channel image, got {:?}", shape));
    }
    Ok((hw[0], hw[1]))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" filtering: output is `(h − 10) × (w − 10)`.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, &c)| c * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, &c)| c * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully interior 11×11 Gaussian
/// windows (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim(reference: &Tensor, test: &Tensor) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(shape_err!("ssim: {:?} vs {:?}", reference.shape(), test.shape()));
    }
    let (h, w) = single_plane(reference)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!("ssim needs images of at least {0}x{0}, got {1}x{2}", SSIM_WINDOW, h, w));
    }
    let k = gaussian_window();
    let x: Vec<f64> = reference.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = test.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(&x, h, w, &k);
    let mu_y = filter_valid(&y, h, w, &k);
    let e_xx = filter_valid(&xx, h, w, &k);
    let e_yy = filter_valid(&yy, h, w, &k);
    let e_xy = filter_valid(&xy, h, w, &k);

    let c1 = (SSIM_K1 * SSIM_RANGE) * (SSIM_K1 * SSIM_RANGE);
    let c2 = (SSIM_K2 * SSIM_RANGE) * (SSIM_K2 * SSIM_RANGE);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sxx = e_xx[i] - mx * mx;
            let syy = e_yy[i] - my * my;
            let sxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean and sample standard deviation of a metric over a set of images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample (N − 1) standard deviation; zero when `n == 1`.
    pub std: f64,
    /// Number of values the statistics were computed from.
    pub n: usize,
    /// Values that were `+∞` (perfect PSNR) and left out of `mean`/`std`.
    pub infinite: usize,
}

/// Aggregates finite values. Infinities are counted and excluded; if every
/// value is infinite the mean is `+∞` with zero spread.
pub fn aggregate(values: &[f64]) -> Result<MetricStats> {
    if values.is_empty() {
        return Err(invalid_arg!("cannot aggregate an empty list"));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(invalid_arg!("cannot aggregate {}", v));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let infinite = values.len() - finite.len();
    if finite.is_empty() {
        return Ok(MetricStats { mean: values[0], std: 0.0, n: values.len(), infinite });
    }
    let n = finite.len();
    let mean = finite.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        libm::sqrt(finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    Ok(MetricStats { mean, std, n, infinite })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[1, 1, h, w], |i| ((i * 37 % 101) as f32) / 100.0).unwrap()
    }

    #[test]
    fn psnr_constant_offset() {
        let r = Tensor::full(&[1, 1, 8, 8], 0.4);
        let t = r.map(|v| v + 0.1);
        let p = psnr(&r, &t, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "{}", p);
        assert_eq!(psnr(&r, &r, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&r, &Tensor::zeros(&[1, 1, 8, 7]), 1.0).is_err());
    }

    #[test]
    fn psnr_depends_only_on_difference() {
        let r = ramp(6, 6);
        let t = r.map(|v| v * 0.9);
        let shift = 0.05;
        let p1 = psnr(&r, &t, 1.0).unwrap();
        let p2 = psnr(&r.map(|v| v + shift), &t.map(|v| v + shift), 1.0).unwrap();
        assert!((p1 - p2).abs() < 1e-4);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = ramp(16, 20);
        let b = a.map(|v| (v * 0.8 + 0.05).min(1.0));
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        assert!(s < 1.0 && s > -1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let a = Tensor::full(&[1, 1, 16, 16], 0.25);
        let b = Tensor::full(&[1, 1, 16, 16], 0.75);
        let c1 = 1e-4;
        let expected = (2.0 * 0.25 * 0.75 + c1) / (0.25f64 * 0.25 + 0.75 * 0.75 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 0.600064).abs() < 1e-6);
    }

    #[test]
    fn ssim_rejects_small_or_multichannel() {
        let small = Tensor::zeros(&[1, 1, 10, 32]);
        assert!(ssim(&small, &small).is_err());
        let multi = Tensor::zeros(&[1, 2, 16, 16]);
        assert!(ssim(&multi, &multi).is_err());
        assert!(ssim(&Tensor::zeros(&[16, 16]), &Tensor::zeros(&[16, 16])).is_ok());
    }

    #[test]
    fn aggregate_basics() {
        let s = aggregate(&[3.0, 5.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        let s = aggregate(&[7.5]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (7.5, 0.0, 1));
        let s = aggregate(&[1.0, f64::INFINITY, 3.0]).unwrap();
        assert_eq!((s.mean, s.n, s.infinite), (2.0, 2, 1));
        let s = aggregate(&[f64::INFINITY; 2]).unwrap();
        assert_eq!((s.mean, s.std, s.infinite), (f64::INFINITY, 0.0, 2));
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[f64::NAN]).is_err());
    }
}
