//! Image preprocessing, synthetic phantoms, dataset splitting and
//! Gaussian noise injection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid_arg, shape_err, Result};
use crate::rng;
use crate::tensor::Tensor;

/// A clean single-channel image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    /// `(1, 1, H, W)`.
    pub pixels: Tensor,
}

impl ImageSample {
    /// Builds a sample from 8-bit intensity levels (`0..=255`, possibly
    /// fractional after channel averaging): divides by 255, then resizes
    /// bilinearly to `target × target`.
    pub fn from_levels(id: &str, width: usize, height: usize, levels: &[f32], target: usize) -> Result<Self> {
        if levels.len() != width * height || width == 0 || height == 0 {
            return Err(shape_err!("{}: {} levels for a {}x{} image", id, levels.len(), width, height));
        }
        let normalized: Vec<f32> = levels.iter().map(|&v| (v / 255.0).clamp(0.0, 1.0)).collect();
        let resized = resize_bilinear(&normalized, height, width, target, target)?;
        Ok(Self { id: id.into(), pixels: Tensor::new(&[1, 1, target, target], resized)? })
    }

    pub fn size(&self) -> (usize, usize) {
        let s = self.pixels.shape();
        (s[2], s[3])
    }
}

/// Bilinear resampling with half-pixel centre alignment; source
/// coordinates are clamped to the image border.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Result<Vec<f32>> {
    if src.len() != h * w || h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(shape_err!("resize {}x{} ({} values) to {}x{}", h, w, src.len(), out_h, out_w));
    }
    let axis = |out: usize, len_in: usize, len_out: usize| {
        let pos = ((out as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5).clamp(0.0, (len_in - 1) as f64);
        let lo = libm::floor(pos) as usize;
        let hi = (lo + 1).min(len_in - 1);
        (lo, hi, (pos - lo as f64) as f32)
    };
    let cols: Vec<(usize, usize, f32)> = (0..out_w).map(|x| axis(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, h, out_h);
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

/// `[0, 1]` → 8-bit with round-half-to-even.
pub fn quantize_u8(value: f32) -> u8 {
    libm::rintf(value.clamp(0.0, 1.0) * 255.0) as u8
}

/// Deterministic brain-like phantoms: a dark background, a large soft
/// ellipse, and smaller soft ellipses of varying intensity inside it
/// (2 to 6 ellipses in total).
pub fn generate_phantoms(count: usize, size: usize, seed: u64) -> Result<Vec<ImageSample>> {
    if count == 0 {
        return Err(invalid_arg!("phantom count must be at least 1"));
    }
    if size < 16 {
        return Err(invalid_arg!("phantom size must be at least 16, got {}", size));
    }
    (0..count).map(|i| phantom(i, size, seed)).collect()
}

struct Ellipse {
    cx: f32,
    cy: f32,
    a: f32,
    b: f32,
    cos: f32,
    sin: f32,
    intensity: f32,
    edge: f32,
}

impl Ellipse {
    /// Soft membership in `[0, 1]`: a logistic ramp roughly `edge` pixels wide.
    fn alpha(&self, x: f32, y: f32) -> f32 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let r = libm::sqrtf((u / self.a) * (u / self.a) + (v / self.b) * (v / self.b));
        let signed_px = (1.0 - r) * self.a.min(self.b);
        crate::ops::sigmoid_scalar(signed_px / self.edge)
    }
}

fn phantom(index: usize, size: usize, seed: u64) -> Result<ImageSample> {
    let mut rng = rng::seeded_stream(seed, &format!("phantom-{}", index));
    let s = size as f32;
    let background: f32 = rng.random_range(0.0..0.04);
    let total = rng.random_range(2..=6usize);
    let angle = |rng: &mut rand_chacha::ChaCha8Rng| {
        let t: f32 = rng.random_range(0.0..core::f32::consts::PI);
        (libm::cosf(t), libm::sinf(t))
    };

    let (cos, sin) = angle(&mut rng);
    let head = Ellipse {
        cx: s * rng.random_range(0.45..0.55),
        cy: s * rng.random_range(0.45..0.55),
        a: s * rng.random_range(0.30..0.42),
        b: s * rng.random_range(0.26..0.38),
        cos,
        sin,
        intensity: rng.random_range(0.25..0.5),
        edge: rng.random_range(0.8..2.0),
    };
    let mut shapes = Vec::with_capacity(total);
    let inner_radius = head.a.min(head.b);
    shapes.push(head);
    for _ in 1..total {
        let r = inner_radius * rng.random_range(0.0..0.55);
        let t: f32 = rng.random_range(0.0..2.0 * core::f32::consts::PI);
        let (cos, sin) = angle(&mut rng);
        shapes.push(Ellipse {
            cx: shapes[0].cx + r * libm::cosf(t),
            cy: shapes[0].cy + r * libm::sinf(t),
            a: s * rng.random_range(0.05..0.2),
            b: s * rng.random_range(0.04..0.16),
            cos,
            sin,
            intensity: rng.random_range(0.05..0.95),
            edge: rng.random_range(0.6..2.5),
        });
    }

    let data = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f32 + 0.5, (i / size) as f32 + 0.5);
            shapes
                .iter()
                .fold(background, |v, e| {
                    let a = e.alpha(x, y);
                    v * (1.0 - a) + e.intensity * a
                })
                .clamp(0.0, 1.0)
        })
        .collect();
    Ok(ImageSample { id: format!("phantom_{:05}", index), pixels: Tensor::new(&[1, 1, size, size], data)? })
}

/// Disjoint train/validation/test id lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

pub const TEST_FRACTION: f64 = 0.20;
pub const VAL_FRACTION: f64 = 0.15;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

/// Seeded shuffle, then `round(0.2·N)` ids for test and
/// `round(0.15·(N − test))` of the remainder for validation.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetSplit> {
    let n = ids.len();
    if n < 10 {
        return Err(invalid_arg!("need at least 10 samples to split, got {}", n));
    }
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid_arg!("sample ids must be unique"));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::seeded(seed));
    let n_test = libm::round(TEST_FRACTION * n as f64) as usize;
    let n_val = libm::round(VAL_FRACTION * (n - n_test) as f64) as usize;
    let train = shuffled.split_off(n_test + n_val);
    let val = shuffled.split_off(n_test);
    Ok(DatasetSplit { train, val, test: shuffled, seed })
}

/// Additive white Gaussian noise with standard deviation `sigma_raw / 100`
/// on `[0, 1]` images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseConfig {
    pub sigma_raw: u16,
    pub clip: bool,
    pub seed: u64,
}

pub const DEFAULT_SIGMAS: [u16; 3] = [10, 15, 25];

impl NoiseConfig {
    pub fn new(sigma_raw: u16, seed: u64) -> Result<Self> {
        if sigma_raw == 0 {
            return Err(invalid_arg!("noise sigma must be positive"));
        }
        Ok(Self { sigma_raw, clip: true, seed })
    }

    pub fn sigma_norm(&self) -> f32 {
        self.sigma_raw as f32 / 100.0
    }
}

/// Noisy input and clean target for one image at one noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyPair {
    pub id: String,
    pub noisy: Tensor,
    pub clean: Tensor,
}

impl NoisyPair {
    /// A pair whose input is the clean image itself.
    pub fn identity(sample: &ImageSample) -> Self {
        Self { id: sample.id.clone(), noisy: sample.pixels.clone(), clean: sample.pixels.clone() }
    }
}

/// The unclipped noise field `sigma · z` for one sample, drawn from a
/// generator keyed by `(seed, id)`.
pub fn noise_field(id: &str, sigma: f32, seed: u64, len: usize) -> Vec<f32> {
    let mut rng = rng::seeded_stream(seed, id);
    (0..len)
        .map(|_| {
            let z: f32 = rng.sample(StandardNormal);
            sigma * z
        })
        .collect()
}

/// Adds seeded Gaussian noise, clipping to `[0, 1]` when `cfg.clip` is set.
pub fn add_gaussian_noise(sample: &ImageSample, cfg: &NoiseConfig) -> NoisyPair {
    add_noise_with_sigma(sample, cfg.sigma_norm(), cfg.clip, cfg.seed)
}

pub fn add_noise_with_sigma(sample: &ImageSample, sigma: f32, clip: bool, seed: u64) -> NoisyPair {
    let clean = &sample.pixels;
    let noise = noise_field(&sample.id, sigma, seed, clean.numel());
    let mut noisy = clean.clone();
    for (v, n) in noisy.data_mut().iter_mut().zip(noise) {
        *v += n;
        if clip {
            *v = v.clamp(0.0, 1.0);
        }
    }
    NoisyPair { id: sample.id.clone(), noisy, clean: clean.clone() }
}
