//! Checkpoint and dataset-cache files, phantom export and single-image
//! denoising.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use denobench_core::cache::{decode_dataset, CachedSample};
use denobench_core::checkpoint::Checkpoint;
use denobench_core::data::{generate_phantoms, ImageSample};
use denobench_core::{ModelGraph, Tensor};

use crate::error::{io_err, BenchError, Result};
use crate::images::{read_levels, write_png};

pub fn save_checkpoint(path: &Path, model: &ModelGraph) -> Result<()> {
    fs::write(path, Checkpoint::from_model(model).encode()).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelGraph> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => BenchError::CheckpointNotFound(path.to_path_buf()),
        _ => BenchError::Io { path: path.to_path_buf(), source: e },
    })?;
    let checkpoint =
        Checkpoint::decode(&bytes).map_err(|source| BenchError::Format { path: path.to_path_buf(), source })?;
    Ok(checkpoint.into_model()?)
}

pub fn load_dataset_cache(path: &Path) -> Result<Vec<CachedSample>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_dataset(&bytes).map_err(|source| BenchError::Format { path: path.to_path_buf(), source })
}

/// Writes phantoms as `<id>.png` into `dir`, returning the paths.
pub fn write_phantoms(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    generate_phantoms(count, size, seed)?
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.png", s.id));
            write_png(&path, &s.pixels)?;
            Ok(path)
        })
        .collect()
}

/// Denoises one image file with a checkpointed model and writes the result
/// as 8-bit PNG. The image is resized to `size × size`; without `size` it
/// must be square and keeps its own size.
pub fn denoise_file(checkpoint: &Path, input: &Path, output: &Path, size: Option<usize>) -> Result<Tensor> {
    let model = load_checkpoint(checkpoint)?;
    let levels = read_levels(input)?;
    let target = match size {
        Some(s) => s,
        None if levels.width == levels.height => levels.width,
        None => {
            return Err(BenchError::Config(format!(
                "{} is {}x{}; pass a target size for non-square images",
                input.display(),
                levels.width,
                levels.height
            )))
        }
    };
    let sample = ImageSample::from_levels("input", levels.width, levels.height, &levels.values, target)?;
    let out = model.predict(&sample.pixels)?;
    write_png(output, &out)?;
    Ok(out)
}
