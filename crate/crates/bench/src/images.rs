//! PNG/PGM reading and 8-bit PNG writing.

use std::fs;
use std::path::{Path, PathBuf};

use denobench_core::data::{quantize_u8, ImageSample};
use denobench_core::Tensor;
use image::{DynamicImage, GrayImage};

use crate::error::{io_err, BenchError, Result};

/// Decoded image as intensity levels in `0..=255`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Levels {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// Colour images are reduced to the mean of their colour channels; alpha
/// is ignored. 16-bit images are rescaled to the 8-bit range.
pub fn read_levels(path: &Path) -> Result<Levels> {
    let img = image::open(path).map_err(|e| BenchError::Image { path: path.to_path_buf(), message: e.to_string() })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(f32::from).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| v as f32 / 257.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f32).collect(),
        other => other.to_rgb32f().pixels().map(|p| (p.0[0] + p.0[1] + p.0[2]) / 3.0 * 255.0).collect(),
    };
    Ok(Levels { width, height, values })
}

/// Reads one image, normalizes it to `[0, 1]` and resizes it to
/// `target × target`. The id is the file stem.
pub fn load_image(path: &Path, target: usize) -> Result<ImageSample> {
    let levels = read_levels(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ImageSample::from_levels(&id, levels.width, levels.height, &levels.values, target)?)
}

/// Result of scanning a directory.
#[derive(Debug)]
pub struct LoadedImages {
    /// Sorted by id.
    pub samples: Vec<ImageSample>,
    /// Files that looked like images but could not be used, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

/// Loads every PNG/PGM file in `dir` (not recursive). Unreadable files are
/// logged and skipped; a directory with no usable image is an error.
pub fn load_images(dir: &Path, target: usize) -> Result<LoadedImages> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io_err(dir))?;
    paths.retain(|p| is_image_file(p));
    paths.sort();

    let mut samples: Vec<ImageSample> = Vec::with_capacity(paths.len());
    let mut skipped = Vec::new();
    for path in paths {
        match load_image(&path, target) {
            Ok(sample) if samples.iter().any(|s| s.id == sample.id) => {
                log::warn!("skipping {}: duplicate id {:?}", path.display(), sample.id);
                skipped.push((path, format!("duplicate id {}", sample.id)));
            }
            Ok(sample) => samples.push(sample),
            Err(e) => {
                log::warn!("skipping {}", e);
                skipped.push((path, e.to_string()));
            }
        }
    }
    if samples.is_empty() {
        return Err(BenchError::EmptyDataset { path: dir.to_path_buf(), skipped: skipped.len() });
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(LoadedImages { samples, skipped })
}

/// Writes a `(1, 1, H, W)` or `(H, W)` image in `[0, 1]` as 8-bit grayscale
/// PNG, rounding half to even.
pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    let shape = image.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if image.numel() != h * w {
        return Err(BenchError::Image { path: path.to_path_buf(), message: format!("not a single image: {:?}", shape) });
    }
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize_u8(v)).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| BenchError::Image { path: path.to_path_buf(), message: e.to_string() })
}
