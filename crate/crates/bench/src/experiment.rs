//! The architecture × noise-level grid.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use denobench_core::cache::{encode_dataset, CachedSample};
use denobench_core::data::{add_gaussian_noise, generate_phantoms, split_dataset, DatasetSplit, ImageSample, NoiseConfig, NoisyPair};
use denobench_core::train::{evaluate, train_with, EvalReport, TrainHistory};
use denobench_core::{Architecture, ModelGraph, Result as CoreResult, Tensor};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{io_err, Result};
use crate::images::load_images;
use crate::report::{self, SummaryRow};
use crate::storage::save_checkpoint;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";
pub const DATASET_FILE: &str = "dataset.dnbd";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub architecture: Architecture,
    pub sigma: u16,
}

impl Cell {
    /// Directory name under `cells/`, e.g. `cadtra_sigma10`.
    pub fn name(&self) -> String {
        format!("{}_sigma{}", self.architecture.id(), self.sigma)
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub history: TrainHistory,
    pub report: EvalReport,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: String,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    /// Model and noisy-baseline rows in summary order.
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub skipped_images: usize,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Upper bound on concurrently running cells.
    pub jobs: usize,
    /// Also write the clean and noisy images as a dataset cache.
    pub save_dataset: bool,
}

/// Clean images plus their split.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub samples: Vec<ImageSample>,
    pub split: DatasetSplit,
    pub skipped: usize,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (samples, skipped) = match &cfg.data {
        DataSource::Phantoms { count, seed } => (generate_phantoms(*count, cfg.image_size, *seed)?, 0),
        DataSource::Directory(dir) => {
            let loaded = load_images(dir, cfg.image_size)?;
            (loaded.samples, loaded.skipped.len())
        }
    };
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let split = split_dataset(&ids, cfg.seed)?;
    Ok(PreparedData { samples, split, skipped })
}

/// Train, validation and test pairs at one noise level.
#[derive(Clone, Debug)]
pub struct NoisySets {
    pub sigma: u16,
    pub train: Vec<NoisyPair>,
    pub val: Vec<NoisyPair>,
    pub test: Vec<NoisyPair>,
}

impl PreparedData {
    pub fn noisy_sets(&self, sigma: u16, seed: u64) -> Result<NoisySets> {
        let cfg = NoiseConfig::new(sigma, seed)?;
        let pick = |ids: &[String]| -> Vec<NoisyPair> {
            ids.iter()
                .map(|id| {
                    let sample = self.samples.iter().find(|s| &s.id == id).expect("split ids come from samples");
                    add_gaussian_noise(sample, &cfg)
                })
                .collect()
        };
        Ok(NoisySets { sigma, train: pick(&self.split.train), val: pick(&self.split.val), test: pick(&self.split.test) })
    }
}

fn identity(batch: &Tensor) -> CoreResult<Tensor> {
    Ok(batch.clone())
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell, sets: &NoisySets, dir: &Path) -> Result<CellResult> {
    let start = Instant::now();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut model = ModelGraph::build(cell.architecture, cfg.width_scale, cfg.seed)?;
    let train_cfg = cfg.train_config();
    let outcome = train_with(&mut model, &sets.train, &sets.val, &train_cfg, |e| {
        log::info!(
            "{} epoch {} train {:.6} val {:.6}{}",
            cell.name(),
            e.epoch,
            e.train_loss,
            e.val_loss,
            if e.is_best { " (best)" } else { "" }
        );
    })?;
    save_checkpoint(&dir.join("model.dnb"), &model)?;
    report::write_history_csv(&dir.join("history.csv"), &outcome.history)?;
    let eval = evaluate(&model, cell.architecture.display_name(), cell.sigma, &sets.test, cfg.batch_size)?;
    report::write_per_image_csv(&dir.join("per_image.csv"), &eval)?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} done in {:.1}s: PSNR {:.3} (noisy {:.3}), SSIM {:.4} (noisy {:.4})",
        cell.name(),
        seconds,
        eval.psnr_stats.mean,
        eval.baseline_psnr_stats.mean,
        eval.ssim_stats.mean,
        eval.baseline_ssim_stats.mean
    );
    Ok(CellResult { cell, history: outcome.history, report: eval, seconds })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every (architecture, σ) cell and writes, under `opts.out_dir`:
/// `config.json`, `cells/<cell>/{model.dnb,history.csv,per_image.csv}`,
/// `summary.csv` and `summary.md`. A failing cell is recorded in
/// `cells/<cell>/error.txt` and the grid carries on.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let config_path = out.join("config.json");
    fs::write(&config_path, cfg.to_json() + "\n").map_err(io_err(&config_path))?;

    let data = prepare_data(cfg)?;
    log::info!(
        "{} images: {} train, {} validation, {} test",
        data.samples.len(),
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len()
    );
    let mut sigmas = cfg.sigmas.clone();
    sigmas.sort_unstable();
    sigmas.dedup();
    let sets: Vec<NoisySets> = sigmas.iter().map(|&s| data.noisy_sets(s, cfg.seed)).collect::<Result<_>>()?;
    if opts.save_dataset {
        write_dataset_cache(&out.join(DATASET_FILE), &data, &sigmas, cfg.seed)?;
    }

    let mut rows = Vec::new();
    for set in &sets {
        let baseline = evaluate(&identity, report::NOISY_METHOD, set.sigma, &set.test, cfg.batch_size)?;
        rows.push(SummaryRow::baseline(&baseline));
    }

    let cells: Vec<(Cell, usize)> = sets
        .iter()
        .enumerate()
        .flat_map(|(k, set)| cfg.architectures.iter().map(move |&a| (Cell { architecture: a, sigma: set.sigma }, k)))
        .collect();
    let results: Mutex<Vec<Option<std::result::Result<CellResult, String>>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let jobs = opts.jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cell, k)) = cells.get(i) else { break };
                let dir = out.join("cells").join(cell.name());
                let result = panic::catch_unwind(AssertUnwindSafe(|| run_cell(cfg, cell, &sets[k], &dir)))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string()));
                if let Err(msg) = &result {
                    log::error!("{} failed: {}", cell.name(), msg);
                    let _ = fs::create_dir_all(&dir);
                    let _ = fs::write(dir.join("error.txt"), format!("{}\n", msg));
                }
                results.lock().expect("no poisoning: cells catch their panics")[i] = Some(result);
            });
        }
    });

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for ((cell, _), result) in cells.iter().zip(results.into_inner().expect("threads joined")) {
        match result.expect("every cell ran") {
            Ok(r) => {
                rows.push(SummaryRow::from_report(&r.report));
                done.push(r);
            }
            Err(error) => failures.push(CellFailure { cell: *cell, error }),
        }
    }
    report::sort_rows(&mut rows);
    report::write_summary_csv(&out.join(SUMMARY_CSV), &rows)?;
    let mut md = report::render_markdown(&rows);
    if !failures.is_empty() {
        md.push_str("\nFailed cells:\n\n");
        for f in &failures {
            md.push_str(&format!("- {}: {}\n", f.cell.name(), f.error));
        }
    }
    let md_path = out.join(SUMMARY_MD);
    fs::write(&md_path, md).map_err(io_err(&md_path))?;

    Ok(ExperimentOutcome { out_dir: out.clone(), rows, cells: done, failures, skipped_images: data.skipped })
}

fn write_dataset_cache(path: &Path, data: &PreparedData, sigmas: &[u16], seed: u64) -> Result<()> {
    let configs: Vec<NoiseConfig> = sigmas.iter().map(|&s| NoiseConfig::new(s, seed)).collect::<CoreResult<_>>()?;
    let cached: Vec<CachedSample> = data
        .samples
        .iter()
        .map(|s| CachedSample {
            id: s.id.clone(),
            clean: s.pixels.clone(),
            noisy: configs.iter().map(|c| (c.sigma_raw, add_gaussian_noise(s, c).noisy)).collect(),
        })
        .collect();
    let bytes = encode_dataset(&cached)?;
    fs::write(path, bytes).map_err(io_err(path))
}
