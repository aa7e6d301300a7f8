//! Mini-batch MSE/Adam training with early stopping on validation loss,
//! and test-set evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::arch::{ModelGraph, ParamStore, WidthScale};
use crate::data::NoisyPair;
use crate::error::{invalid_arg, Error, Result};
use crate::metrics::{self, aggregate, MetricStats};
use crate::ops;
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub patience: usize,
    pub seed: u64,
    pub width_scale: WidthScale,
}

impl Default for TrainConfig {
    /// 100 epochs, batch 5, learning rate 0.001, patience 5.
    fn default() -> Self {
        Self { max_epochs: 100, batch_size: 5, learning_rate: 1e-3, patience: 5, seed: 42, width_scale: WidthScale::FULL }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(invalid_arg!("epochs, batch size and patience must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid_arg!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.patience > self.max_epochs {
            return Err(invalid_arg!("patience {} exceeds max epochs {}", self.patience, self.max_epochs));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub is_best: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Patience-based stopping on strict improvement of validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, epoch: 0 }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn observe(&mut self, val_loss: f64) -> Observation {
        self.epoch += 1;
        let improved = self.best.map_or(true, |(_, best)| val_loss < best);
        if improved {
            self.best = Some((self.epoch, val_loss));
        }
        let since = self.epoch - self.best.map_or(0, |(e, _)| e);
        Observation { improved, stop: since >= self.patience }
    }
}

/// Mean squared error over a set of pairs, in eval mode.
pub fn validation_loss(model: &ModelGraph, pairs: &[NoisyPair], batch_size: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid_arg!("validation set is empty"));
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for chunk in pairs.chunks(batch_size.max(1)) {
        let noisy = Tensor::stack(&chunk.iter().map(|p| &p.noisy).collect::<Vec<_>>())?;
        let clean = Tensor::stack(&chunk.iter().map(|p| &p.clean).collect::<Vec<_>>())?;
        let out = model.predict(&noisy)?;
        total += ops::mse(&out, &clean)? as f64 * out.numel() as f64;
        count += out.numel();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub weights: ParamStore,
    pub history: TrainHistory,
}

/// Trains `model` in place. On return the model holds the best-validation
/// snapshot, which is also returned.
pub fn train(model: &mut ModelGraph, train: &[NoisyPair], val: &[NoisyPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train, val, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &mut ModelGraph,
    train: &[NoisyPair],
    val: &[NoisyPair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(invalid_arg!("training and validation sets must be non-empty"));
    }
    if cfg.batch_size > train.len() {
        return Err(invalid_arg!("batch size {} exceeds {} training pairs", cfg.batch_size, train.len()));
    }

    let trainable = model.params().trainable_indices();
    let sizes = trainable.iter().map(|&i| model.params().get(i).tensor.numel());
    let mut adam = AdamState::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() }, sizes);
    let mut shuffle_rng = rng::seeded_stream(cfg.seed, "epoch-shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params().clone();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let noisy = Tensor::stack(&chunk.iter().map(|&i| &train[i].noisy).collect::<Vec<_>>())?;
            let clean = Tensor::stack(&chunk.iter().map(|&i| &train[i].clean).collect::<Vec<_>>())?;
            let loss = train_step(model, &mut adam, &trainable, noisy, clean)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss { epoch, batch: batch_index, loss },
                    other => other,
                })?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = validation_loss(model, val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0, loss: val_loss as f32 });
        }
        let obs = stopper.observe(val_loss);
        if obs.improved {
            best = model.params().clone();
        }
        let record = EpochRecord { epoch, train_loss, val_loss, is_best: obs.improved };
        log::debug!("epoch {} train {:.6} val {:.6}{}", epoch, train_loss, val_loss, if obs.improved { " *" } else { "" });
        on_epoch(&record);
        history.epochs.push(record);
        if obs.stop && epoch < cfg.max_epochs {
            history.stopped_early = true;
            break;
        }
    }

    history.best_epoch = stopper.best_epoch().unwrap_or(0);
    model.params_mut().assign(&best)?;
    Ok(TrainOutcome { weights: best, history })
}

/// One forward/backward/Adam step on a batch. Returns the batch loss.
pub fn train_step(
    model: &mut ModelGraph,
    adam: &mut AdamState,
    trainable: &[usize],
    noisy: Tensor,
    clean: Tensor,
) -> Result<f32> {
    let mut tape = Tape::new();
    let fwd = model.forward_train(&mut tape, noisy)?;
    let target = tape.leaf(clean, false);
    let loss_var = tape.mse_loss(fwd.output, target)?;
    let loss = tape.value(loss_var).item().unwrap_or(f32::NAN);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0, loss });
    }
    let mut grads = tape.backward(loss_var)?;
    let mut by_param: Vec<Option<Tensor>> = (0..model.params().len()).map(|_| None).collect();
    for &(index, var) in &fwd.params {
        by_param[index] = grads.take(var);
    }
    let grad_tensors: Vec<Tensor> = trainable
        .iter()
        .map(|&i| by_param[i].take().unwrap_or_else(|| Tensor::zeros(model.params().get(i).tensor.shape())))
        .collect();
    let grad_slices: Vec<&[f32]> = grad_tensors.iter().map(|t| t.data()).collect();
    let mut params = model.params_mut().data_mut(trainable);
    adam.step(&mut params, &grad_slices)?;
    Ok(loss)
}

/// Anything that maps a noisy `(N, 1, H, W)` batch to a denoised one.
pub trait Denoiser {
    fn denoise(&self, batch: &Tensor) -> Result<Tensor>;
}

impl Denoiser for ModelGraph {
    fn denoise(&self, batch: &Tensor) -> Result<Tensor> {
        self.predict(batch)
    }
}

impl<F: Fn(&Tensor) -> Result<Tensor>> Denoiser for F {
    fn denoise(&self, batch: &Tensor) -> Result<Tensor> {
        self(batch)
    }
}

/// Per-image metrics on a test set plus their aggregates and the
/// noisy-input baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub sigma_raw: u16,
    pub method: String,
    pub ids: Vec<String>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub baseline_psnr: Vec<f64>,
    pub baseline_ssim: Vec<f64>,
    pub psnr_stats: MetricStats,
    pub ssim_stats: MetricStats,
    pub baseline_psnr_stats: MetricStats,
    pub baseline_ssim_stats: MetricStats,
}

pub fn evaluate<D: Denoiser + ?Sized>(
    model: &D,
    method: &str,
    sigma_raw: u16,
    pairs: &[NoisyPair],
    batch_size: usize,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(invalid_arg!("test set is empty"));
    }
    let mut report_lists = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for chunk in pairs.chunks(batch_size.max(1)) {
        let noisy = Tensor::stack(&chunk.iter().map(|p| &p.noisy).collect::<Vec<_>>())?;
        let out = model.denoise(&noisy)?;
        if !out.same_shape(&noisy) {
            return Err(crate::error::shape_err!("denoiser changed shape {:?} -> {:?}", noisy.shape(), out.shape()));
        }
        for (i, pair) in chunk.iter().enumerate() {
            let denoised = out.batch_item(i)?;
            report_lists[0].push(metrics::psnr(&pair.clean, &denoised, 1.0)?);
            report_lists[1].push(metrics::ssim(&pair.clean, &denoised)?);
            report_lists[2].push(metrics::psnr(&pair.clean, &pair.noisy, 1.0)?);
            report_lists[3].push(metrics::ssim(&pair.clean, &pair.noisy)?);
        }
    }
    let [psnr, ssim, baseline_psnr, baseline_ssim] = report_lists;
    Ok(EvalReport {
        sigma_raw,
        method: method.into(),
        ids: pairs.iter().map(|p| p.id.clone()).collect(),
        psnr_stats: aggregate(&psnr)?,
        ssim_stats: aggregate(&ssim)?,
        baseline_psnr_stats: aggregate(&baseline_psnr)?,
        baseline_ssim_stats: aggregate(&baseline_ssim)?,
        psnr,
        ssim,
        baseline_psnr,
        baseline_ssim,
    })
}
