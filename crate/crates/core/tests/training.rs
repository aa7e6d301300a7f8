use denobench_core::arch::ParamStore;
use denobench_core::data::{add_gaussian_noise, generate_phantoms, NoiseConfig, NoisyPair};
use denobench_core::metrics::aggregate;
use denobench_core::optim::{AdamConfig, AdamState};
use denobench_core::train::{evaluate, train, train_step, validation_loss, TrainConfig};
use denobench_core::{Architecture, Error, ModelGraph, Result, Tensor, WidthScale};

fn quarter() -> WidthScale {
    WidthScale::new(1, 4).unwrap()
}

fn identity_pairs(count: usize, size: usize, seed: u64) -> Vec<NoisyPair> {
    generate_phantoms(count, size, seed).unwrap().iter().map(NoisyPair::identity).collect()
}

fn noisy_pairs(count: usize, size: usize, sigma: u16) -> Vec<NoisyPair> {
    let cfg = NoiseConfig::new(sigma, 42).unwrap();
    generate_phantoms(count, size, 42).unwrap().iter().map(|s| add_gaussian_noise(s, &cfg)).collect()
}

fn small_config(max_epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig { max_epochs, patience, width_scale: quarter(), ..TrainConfig::default() }
}

#[test]
fn identity_task_loss_decreases() {
    let train_set = identity_pairs(20, 32, 1);
    let val_set = identity_pairs(5, 32, 2);
    for arch in Architecture::ALL {
        let mut model = ModelGraph::build(arch, quarter(), 42).unwrap();
        let out = train(&mut model, &train_set, &val_set, &small_config(5, 5)).unwrap();
        let h = &out.history.epochs;
        assert_eq!(h.len(), 5, "{:?}", arch);
        assert!(h[4].train_loss < h[0].train_loss, "{:?}: {:?}", arch, h);
    }
}

#[test]
fn first_steps_decrease_loss_on_a_fixed_batch() {
    let pairs = identity_pairs(5, 16, 3);
    let x = Tensor::stack(&pairs.iter().map(|p| &p.noisy).collect::<Vec<_>>()).unwrap();
    for arch in Architecture::ALL {
        let mut model = ModelGraph::build(arch, quarter(), 42).unwrap();
        let trainable = model.params().trainable_indices();
        let sizes = trainable.iter().map(|&i| model.params().get(i).tensor.numel());
        let mut adam = AdamState::new(AdamConfig::default(), sizes);
        let losses: Vec<f32> =
            (0..4).map(|_| train_step(&mut model, &mut adam, &trainable, x.clone(), x.clone()).unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{:?}: {:?}", arch, losses);
    }
}

#[test]
fn history_invariants_and_best_state() {
    let train_set = noisy_pairs(24, 16, 25);
    let val_set = identity_pairs(6, 16, 9);
    let cfg = TrainConfig { max_epochs: 12, patience: 2, width_scale: quarter(), ..TrainConfig::default() };
    let mut model = ModelGraph::build(Architecture::Cadtra, quarter(), 7).unwrap();
    let out = train(&mut model, &train_set, &val_set, &cfg).unwrap();
    let h = &out.history;
    let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h.epochs[h.best_epoch - 1].val_loss, best);
    assert!(h.epochs[h.best_epoch - 1].is_best);
    if h.stopped_early {
        assert!(h.epochs.len() - h.best_epoch >= cfg.patience);
    }
    assert!(h.epochs.len() <= h.best_epoch + cfg.patience);
    assert_eq!(model.params(), &out.weights);
    assert_eq!(validation_loss(&model, &val_set, cfg.batch_size).unwrap(), best);
}

#[test]
fn training_is_deterministic() {
    let train_set = noisy_pairs(12, 16, 15);
    let val_set = noisy_pairs(4, 16, 10);
    let run = || {
        let mut model = ModelGraph::build(Architecture::Dcmiednet, quarter(), 42).unwrap();
        train(&mut model, &train_set, &val_set, &small_config(3, 3)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    let bits = |p: &ParamStore| p.iter().flat_map(|p| p.tensor.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a.weights), bits(&b.weights));
}

#[test]
fn partial_final_batch_is_trained_on() {
    // 7 pairs with batch 5 is one full and one partial batch per epoch.
    let train_set = identity_pairs(7, 16, 4);
    let mut model = ModelGraph::build(Architecture::CnnDae, quarter(), 1).unwrap();
    let cfg = small_config(1, 1);
    assert!(train(&mut model, &train_set, &train_set[..2], &cfg).is_ok());
    let mut model = ModelGraph::build(Architecture::CnnDae, quarter(), 1).unwrap();
    let err = train(&mut model, &train_set[..4], &train_set[..2], &cfg).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn rejects_bad_inputs() {
    let pairs = identity_pairs(6, 16, 5);
    let mut model = ModelGraph::build(Architecture::CnnDae, quarter(), 1).unwrap();
    let cfg = small_config(2, 1);
    assert!(train(&mut model, &[], &pairs, &cfg).is_err());
    assert!(train(&mut model, &pairs, &[], &cfg).is_err());
    assert!(train(&mut model, &pairs, &pairs, &TrainConfig { patience: 0, ..cfg }).is_err());

    let mut poisoned = pairs.clone();
    poisoned[0].noisy.data_mut()[3] = f32::NAN;
    let err = train(&mut model, &poisoned, &pairs, &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{:?}", err);
}

#[test]
fn evaluation_of_trivial_denoisers() {
    let test_set = noisy_pairs(6, 32, 15);
    let perfect = |batch: &Tensor| -> Result<Tensor> {
        let matches: Vec<&Tensor> = (0..batch.shape()[0])
            .map(|i| {
                let item = batch.batch_item(i).unwrap();
                &test_set.iter().find(|p| p.noisy == item).unwrap().clean
            })
            .collect();
        Tensor::stack(&matches)
    };
    let report = evaluate(&perfect, "perfect", 15, &test_set, 5).unwrap();
    assert_eq!((report.ssim_stats.mean, report.ssim_stats.std), (1.0, 0.0));
    assert_eq!(report.psnr_stats.infinite, test_set.len());

    let identity = |batch: &Tensor| -> Result<Tensor> { Ok(batch.clone()) };
    let report = evaluate(&identity, "identity", 15, &test_set, 4).unwrap();
    assert_eq!(report.psnr, report.baseline_psnr);
    assert_eq!(report.ssim, report.baseline_ssim);
    assert_eq!(report.psnr_stats, report.baseline_psnr_stats);
    assert_eq!(report.ssim_stats, report.baseline_ssim_stats);
}

#[test]
fn report_lists_match_stats() {
    let test_set = noisy_pairs(7, 32, 10);
    let model = ModelGraph::build(Architecture::CnnDae, quarter(), 3).unwrap();
    let report = evaluate(&model, "CNN-DAE", 10, &test_set, 5).unwrap();
    assert_eq!(report.ids.len(), 7);
    assert_eq!(report.psnr.len(), 7);
    assert_eq!(report.ssim.len(), 7);
    assert_eq!(aggregate(&report.psnr).unwrap(), report.psnr_stats);
    assert_eq!(aggregate(&report.ssim).unwrap(), report.ssim_stats);
    assert_eq!(aggregate(&report.baseline_psnr).unwrap(), report.baseline_psnr_stats);
    assert!(evaluate(&model, "CNN-DAE", 10, &[], 5).is_err());
}
