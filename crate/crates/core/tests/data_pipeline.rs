use std::collections::HashSet;

use denobench_core::data::{
    add_gaussian_noise, add_noise_with_sigma, generate_phantoms, noise_field, resize_bilinear, split_dataset,
    ImageSample, NoiseConfig,
};
use denobench_core::metrics::{aggregate, psnr};
use denobench_core::ops;
use denobench_core::Tensor;
use proptest::prelude::*;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("img_{:04}", i)).collect()
}

#[test]
fn split_sizes() {
    let s = split_dataset(&ids(100), 42).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (68, 12, 20));
    let s = split_dataset(&ids(10), 42).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    assert!(split_dataset(&ids(9), 42).is_err());
}

#[test]
fn split_seed_changes_membership() {
    let base = split_dataset(&ids(100), 42).unwrap();
    let differing = (0..20u64).filter(|&k| split_dataset(&ids(100), 1000 + k).unwrap().test != base.test).count();
    assert_eq!(differing, 20);
    assert_eq!(split_dataset(&ids(100), 42).unwrap(), base);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn split_is_a_partition(n in 10usize..400, seed in any::<u64>()) {
        let all = ids(n);
        let s = split_dataset(&all, seed).unwrap();
        let test = (0.2 * n as f64).round() as usize;
        let val = (0.15 * (n - test) as f64).round() as usize;
        prop_assert_eq!(s.test.len(), test);
        prop_assert_eq!(s.val.len(), val);
        prop_assert_eq!(s.train.len(), n - test - val);
        let mut seen = HashSet::new();
        for id in s.train.iter().chain(&s.val).chain(&s.test) {
            prop_assert!(seen.insert(id.clone()));
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn maxpool_inverts_upsample(n in 1usize..3, c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
        let x = Tensor::from_fn(&[n, c, h, w], |i| ((i as u32).wrapping_mul(2_654_435_761) ^ seed) as f32 / u32::MAX as f32).unwrap();
        let (pooled, _) = ops::maxpool2d(&ops::upsample2x(&x).unwrap()).unwrap();
        prop_assert_eq!(pooled, x);
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>(), sigma in 1u16..60, id in "[a-z]{1,8}") {
        let sample = ImageSample { id: id.clone(), pixels: Tensor::full(&[1, 1, 16, 16], 0.5) };
        let cfg = NoiseConfig::new(sigma, seed).unwrap();
        let a = add_gaussian_noise(&sample, &cfg);
        prop_assert_eq!(&a, &add_gaussian_noise(&sample, &cfg));
        prop_assert!(a.noisy.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(&a.clean, &sample.pixels);
    }

    #[test]
    fn resize_stays_in_range(h in 1usize..12, w in 1usize..12, oh in 1usize..20, ow in 1usize..20) {
        let src: Vec<f32> = (0..h * w).map(|i| (i % 5) as f32 / 4.0).collect();
        let out = resize_bilinear(&src, h, w, oh, ow).unwrap();
        prop_assert_eq!(out.len(), oh * ow);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn pre_clip_noise_std_matches_sigma_norm() {
    // Over 10^5 draws the sample std of N(0, 0.1²) is within about 0.0003 of 0.1.
    let field = noise_field("mid_gray", NoiseConfig::new(10, 42).unwrap().sigma_norm(), 42, 100_000);
    let stats = aggregate(&field.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
    assert!(stats.mean.abs() < 2e-3, "{}", stats.mean);
    assert!((0.097..=0.103).contains(&stats.std), "{}", stats.std);
}

#[test]
fn zero_sigma_is_identity() {
    let s = &generate_phantoms(1, 32, 1).unwrap()[0];
    let pair = add_noise_with_sigma(s, 0.0, true, 5);
    assert_eq!(pair.noisy, pair.clean);
}

#[test]
fn phantoms_are_deterministic_and_well_formed() {
    let a = generate_phantoms(200, 64, 42).unwrap();
    let b = generate_phantoms(200, 64, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 200);
    let mut total = 0.0f64;
    for s in &a {
        assert_eq!(s.pixels.shape(), &[1, 1, 64, 64]);
        assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        total += s.pixels.data().iter().map(|&v| v as f64).sum::<f64>() / 4096.0;
    }
    let mean = total / 200.0;
    assert!(mean > 0.05 && mean < 0.6, "{}", mean);
    assert_ne!(generate_phantoms(3, 64, 43).unwrap()[0], a[0]);
    assert!(generate_phantoms(0, 64, 1).is_err());
    assert!(generate_phantoms(1, 15, 1).is_err());
}

#[test]
fn large_image_resizes_to_target() {
    let levels: Vec<f32> = (0..512 * 512).map(|i| ((i * 7) % 256) as f32).collect();
    let s = ImageSample::from_levels("big", 512, 512, &levels, 224).unwrap();
    assert_eq!(s.pixels.shape(), &[1, 1, 224, 224]);
    assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn noisy_psnr_falls_as_sigma_rises() {
    let samples = generate_phantoms(30, 32, 42).unwrap();
    let mean_psnr = |sigma: u16| {
        let cfg = NoiseConfig::new(sigma, 42).unwrap();
        let v: Vec<f64> = samples
            .iter()
            .map(|s| {
                let p = add_gaussian_noise(s, &cfg);
                psnr(&p.clean, &p.noisy, 1.0).unwrap()
            })
            .collect();
        aggregate(&v).unwrap().mean
    };
    let p: Vec<f64> = [10, 15, 25].iter().map(|&s| mean_psnr(s)).collect();
    eprintln!("noisy PSNR at sigma 10/15/25: {:?}", p);
    assert!(p[0] > p[1] && p[1] > p[2]);
}
