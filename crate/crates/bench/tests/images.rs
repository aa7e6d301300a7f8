use std::fs;

use denobench::images::{load_image, load_images, read_levels, write_png};
use denobench::BenchError;
use denobench_core::Tensor;
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

#[test]
fn constant_gray_png_loads_as_level_over_255() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("flat.png");
    GrayImage::from_pixel(8, 8, Luma([128])).save(&path).unwrap();
    let sample = load_image(&path, 8).unwrap();
    assert_eq!(sample.id, "flat");
    assert_eq!(sample.pixels.shape(), &[1, 1, 8, 8]);
    assert!(sample.pixels.data().iter().all(|&v| v == 128.0 / 255.0));
    // Resizing a constant image keeps it constant.
    let small = load_image(&path, 4).unwrap();
    assert!(small.pixels.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
}

#[test]
fn sixteen_bit_and_color_images_reduce_to_8_bit_gray_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let deep = tmp.path().join("deep.png");
    ImageBuffer::<Luma<u16>, Vec<u16>>::from_pixel(4, 4, Luma([257 * 200])).save(&deep).unwrap();
    assert!(read_levels(&deep).unwrap().values.iter().all(|&v| (v - 200.0).abs() < 1e-3));

    let color = tmp.path().join("color.png");
    RgbImage::from_pixel(4, 4, Rgb([10, 20, 60])).save(&color).unwrap();
    let levels = read_levels(&color).unwrap();
    assert_eq!((levels.width, levels.height), (4, 4));
    assert!(levels.values.iter().all(|&v| (v - 30.0).abs() < 1e-3), "{:?}", &levels.values[..4]);
}

#[test]
fn binary_pgm_is_read() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("scan.pgm");
    let mut bytes = b"P5\n3 2\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
    fs::write(&path, bytes).unwrap();
    let levels = read_levels(&path).unwrap();
    assert_eq!((levels.width, levels.height), (3, 2));
    assert_eq!(levels.values, [0.0, 51.0, 102.0, 153.0, 204.0, 255.0]);
}

#[test]
fn directory_loading_sorts_skips_and_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    GrayImage::from_pixel(6, 6, Luma([10])).save(dir.join("b.png")).unwrap();
    GrayImage::from_pixel(6, 6, Luma([20])).save(dir.join("c.png")).unwrap();
    let mut pgm = b"P5\n6 6\n255\n".to_vec();
    pgm.extend_from_slice(&[30; 36]);
    fs::write(dir.join("a.pgm"), pgm).unwrap();
    fs::write(dir.join("broken.png"), b"not a png").unwrap();
    fs::write(dir.join("notes.txt"), "ignored").unwrap();
    fs::create_dir(dir.join("nested")).unwrap();

    let loaded = load_images(dir, 4).unwrap();
    let ids: Vec<&str> = loaded.samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(loaded.skipped.len(), 1);
    assert!(loaded.skipped[0].0.ends_with("broken.png"));
    assert!((loaded.samples[0].pixels.data()[0] - 30.0 / 255.0).abs() < 1e-6);
}

#[test]
fn empty_or_unreadable_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_images(tmp.path(), 16), Err(BenchError::EmptyDataset { skipped: 0, .. })));
    fs::write(tmp.path().join("x.png"), b"junk").unwrap();
    assert!(matches!(load_images(tmp.path(), 16), Err(BenchError::EmptyDataset { skipped: 1, .. })));
    assert!(matches!(load_images(&tmp.path().join("absent"), 16), Err(BenchError::Io { .. })));
}

#[test]
fn png_output_rounds_half_to_even() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("half.png");
    write_png(&path, &Tensor::full(&[1, 1, 5, 7], 0.5)).unwrap();
    let img = image::open(&path).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (7, 5));
    assert!(img.pixels().all(|p| p.0[0] == 128));

    let ramp = Tensor::new(&[1, 1, 1, 4], vec![0.0, 1.5 / 255.0, 2.5 / 255.0, 1.0]).unwrap();
    write_png(&path, &ramp).unwrap();
    assert_eq!(image::open(&path).unwrap().into_luma8().into_raw(), [0, 2, 2, 255]);
}
