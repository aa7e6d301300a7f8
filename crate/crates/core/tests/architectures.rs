use denobench_core::arch::{
    build_cadtra, build_cnn_dae, build_dcmiednet, LayerKind, DCMIEDNET_DILATED_LAYERS, DCMIEDNET_SUBNET_DEPTH,
};
use denobench_core::checkpoint::Checkpoint;
use denobench_core::{Architecture, FormatError, ModelGraph, Tape, Tensor, WidthScale};

const FULL: WidthScale = WidthScale::FULL;

fn quarter() -> WidthScale {
    WidthScale::new(1, 4).unwrap()
}

/// (layer, parameters) rows of the CNN-DAE layer table.
const CNN_DAE_ROWS: [(&str, usize); 10] = [
    ("input_layer", 0),
    ("conv2d_1", 320),
    ("max_pool_1", 0),
    ("conv2d_2", 18_496),
    ("max_pool_2", 0),
    ("conv2d_3", 36_928),
    ("up_sample_1", 0),
    ("conv2d_4", 18_464),
    ("up_sample_2", 0),
    ("conv2d_5", 289),
];

const CADTRA_ROWS: [(&str, usize); 9] = [
    ("input_layer", 0),
    ("batch_norm_1", 4),
    ("conv2d_1", 1_280),
    ("conv2d_2", 73_792),
    ("conv2d_3", 18_464),
    ("conv2d_trans_1", 9_248),
    ("conv2d_trans_2", 18_496),
    ("conv2d_trans_3", 73_856),
    ("conv2d_output", 1_153),
];

/// Expected output shapes as (layer, H, W, C).
const CNN_DAE_SHAPES: [(&str, usize, usize, usize); 10] = [
    ("input_layer", 224, 224, 1),
    ("conv2d_1", 224, 224, 32),
    ("max_pool_1", 112, 112, 32),
    ("conv2d_2", 112, 112, 64),
    ("max_pool_2", 56, 56, 64),
    ("conv2d_3", 56, 56, 64),
    ("up_sample_1", 112, 112, 64),
    ("conv2d_4", 112, 112, 32),
    ("up_sample_2", 224, 224, 32),
    ("conv2d_5", 224, 224, 1),
];

/// Conv weights (3×3) plus bias, evaluated independently of the builder.
fn conv_params(cin: usize, cout: usize) -> usize {
    cin * cout * 9 + cout
}

#[test]
fn cnn_dae_counts_match_table() {
    let count = build_cnn_dae(FULL, 0).unwrap().param_count();
    assert_eq!(count.total, 74_497);
    for (layer, expected) in CNN_DAE_ROWS {
        assert_eq!(count.layer(layer), Some(expected), "{}", layer);
    }
    assert_eq!(count.layer("conv2d_2"), Some(conv_params(32, 64)));
    assert_eq!(CNN_DAE_ROWS.iter().map(|r| r.1).sum::<usize>(), 74_497);
}

#[test]
fn cadtra_counts_match_table() {
    let model = build_cadtra(FULL, 0).unwrap();
    let count = model.param_count();
    assert_eq!(count.total, 196_293);
    for (layer, expected) in CADTRA_ROWS {
        assert_eq!(count.layer(layer), Some(expected), "{}", layer);
    }
    assert_eq!(count.layer("conv2d_2"), Some(conv_params(128, 64)));
    // Two of the four batch-norm values per channel are running statistics.
    assert_eq!(model.trainable_count(), 196_293 - 2);
}

#[test]
fn cnn_dae_shapes_match_table() {
    let model = build_cnn_dae(FULL, 0).unwrap();
    let shapes = model.layer_shapes(1, 224, 224).unwrap();
    for (layer, h, w, c) in CNN_DAE_SHAPES {
        let got = &shapes.iter().find(|(n, _)| n == layer).unwrap().1;
        assert_eq!(got, &vec![1, c, h, w], "{}", layer);
    }
    assert_eq!(shapes.last().unwrap().1, vec![1, 1, 224, 224]);
}

#[test]
fn shape_preservation() {
    for arch in [Architecture::Cadtra, Architecture::Dcmiednet] {
        let model = ModelGraph::build(arch, quarter(), 1).unwrap();
        for (h, w) in [(3, 3), (17, 11), (32, 20)] {
            let out = model.predict(&Tensor::full(&[2, 1, h, w], 0.3)).unwrap();
            assert_eq!(out.shape(), &[2, 1, h, w], "{:?}", arch);
        }
    }
    let cnn = build_cnn_dae(quarter(), 1).unwrap();
    assert_eq!(cnn.predict(&Tensor::full(&[5, 1, 24, 8], 0.3)).unwrap().shape(), &[5, 1, 24, 8]);
    assert!(cnn.predict(&Tensor::zeros(&[1, 1, 30, 32])).is_err());
    assert!(cnn.predict(&Tensor::zeros(&[1, 2, 32, 32])).is_err());
}

#[test]
fn dcmiednet_structure() {
    let model = build_dcmiednet(FULL, 0).unwrap();
    let kinds = |prefix: &str| -> Vec<LayerKind> {
        model.layers().iter().filter(|l| l.name.starts_with(prefix) && l.name.contains("conv")).map(|l| l.kind.clone()).collect()
    };
    let sub1 = kinds("subnet1_");
    let sub2 = kinds("subnet2_");
    assert_eq!((sub1.len(), sub2.len()), (DCMIEDNET_SUBNET_DEPTH, DCMIEDNET_SUBNET_DEPTH));
    for (i, kind) in sub1.iter().enumerate() {
        let LayerKind::Conv { dilation, kernel, .. } = *kind else { panic!("{:?}", kind) };
        let expected = if [2, 5, 9, 12].contains(&(i + 1)) { 2 } else { 1 };
        assert_eq!((dilation, kernel), (expected, 3), "subnet1 layer {}", i + 1);
    }
    assert_eq!(DCMIEDNET_DILATED_LAYERS, [2, 5, 9, 12]);
    assert!(matches!(sub2[15], LayerKind::Conv { kernel: 1, .. }));
    assert!(sub2[..15].iter().all(|k| matches!(k, LayerKind::Conv { kernel: 3, dilation: 1, .. })));

    let count = |kind: LayerKind| model.layers().iter().filter(|l| l.kind == kind).count();
    assert_eq!(count(LayerKind::BatchNorm), 15);
    assert_eq!(count(LayerKind::Subtract), 1);
    let fusion = model.layer("fusion_concat").unwrap();
    assert_eq!(fusion.inputs, ["subnet1_conv16", "subnet2_conv16"]);
    // Compression blocks: SubNet2's closing 1×1 conv, then one after each enhancement block.
    for cb in ["subnet2_conv16", "cb2_conv", "cb3_conv"] {
        assert!(matches!(model.layer(cb).unwrap().kind, LayerKind::Conv { kernel: 1, .. }), "{}", cb);
    }
    for eb in ["eb1", "eb2"] {
        let cat = model.layer(&format!("{}_concat", eb)).unwrap();
        assert_eq!(cat.inputs, [format!("{}_conv_d1", eb), format!("{}_conv_d2", eb)]);
    }
    let sub = model.layer("residual_subtract").unwrap();
    assert_eq!(sub.inputs, ["input_layer", "rb_conv"]);

    let total = model.param_count().total;
    eprintln!("DCMIEDNet parameters: {} (reference 1,493,024)", total);
    assert_eq!(Architecture::Dcmiednet.reference_param_count(), 1_493_024);
}

#[test]
fn zero_noise_estimate_passes_input_through() {
    let mut model = build_dcmiednet(quarter(), 4).unwrap();
    for name in ["rb_conv.weight", "rb_conv.bias"] {
        model.params_mut().find_mut(name).unwrap().tensor.data_mut().fill(0.0);
    }
    let zero = Tensor::zeros(&[1, 1, 12, 12]);
    assert_eq!(model.predict(&zero).unwrap(), zero);
    let x = Tensor::from_fn(&[1, 1, 12, 12], |i| (i % 7) as f32 / 7.0).unwrap();
    assert_eq!(model.predict(&x).unwrap(), x);
}

#[test]
fn outputs_in_unit_interval() {
    for arch in Architecture::ALL {
        let model = ModelGraph::build(arch, quarter(), 2).unwrap();
        let x = Tensor::from_fn(&[2, 1, 16, 16], |i| ((i * 31) % 17) as f32 / 16.0).unwrap();
        let out = model.predict(&x).unwrap();
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)), "{:?}", arch);
        if arch != Architecture::Dcmiednet {
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn identical_images_give_identical_outputs_in_eval() {
    for arch in Architecture::ALL {
        let model = ModelGraph::build(arch, quarter(), 3).unwrap();
        let img = Tensor::from_fn(&[1, 1, 16, 16], |i| (i % 13) as f32 / 13.0).unwrap();
        let out = model.predict(&Tensor::stack(&[&img, &img, &img]).unwrap()).unwrap();
        let first = out.batch_item(0).unwrap();
        for k in 1..3 {
            assert_eq!(out.batch_item(k).unwrap(), first);
        }
        assert_eq!(model.predict(&img).unwrap(), first);
    }
}

#[test]
fn fresh_models_are_finite_over_many_seeds() {
    let x = Tensor::from_fn(&[1, 1, 16, 16], |i| ((i * 7) % 11) as f32 / 10.0).unwrap();
    for seed in 0..100 {
        for arch in Architecture::ALL {
            let model = ModelGraph::build(arch, WidthScale::new(1, 8).unwrap(), seed).unwrap();
            assert!(model.predict(&x).unwrap().is_finite(), "{:?} seed {}", arch, seed);
        }
    }
}

#[test]
fn every_trainable_parameter_gets_a_finite_gradient() {
    for arch in Architecture::ALL {
        let mut model = ModelGraph::build(arch, quarter(), 5).unwrap();
        let x = Tensor::from_fn(&[2, 1, 8, 8], |i| ((i * 5) % 9) as f32 / 9.0).unwrap();
        let mut tape = Tape::new();
        let fwd = model.forward_train(&mut tape, x.clone()).unwrap();
        let target = tape.leaf(x.map(|v| 1.0 - v), false);
        let loss = tape.mse_loss(fwd.output, target).unwrap();
        let grads = tape.backward(loss).unwrap();
        let trainable = model.params().trainable_indices();
        for idx in &trainable {
            let (_, var) = fwd.params.iter().find(|(i, _)| i == idx).expect("parameter used in forward");
            let g = grads.get(*var).unwrap();
            assert_eq!(g.shape(), model.params().get(*idx).tensor.shape());
            assert!(g.is_finite());
        }
        assert_eq!(fwd.params.len(), trainable.len());
    }
}

#[test]
fn train_mode_updates_running_statistics_only() {
    let mut model = build_cadtra(quarter(), 6).unwrap();
    let before = model.params().clone();
    let x = Tensor::from_fn(&[2, 1, 8, 8], |i| 0.2 + (i % 5) as f32 * 0.1).unwrap();
    model.forward_train(&mut Tape::new(), x).unwrap();
    for (a, b) in before.iter().zip(model.params().iter()) {
        assert_eq!(a.tensor == b.tensor, a.trainable, "{}", a.name);
    }
}

#[test]
fn cadtra_checkpoint_round_trip() {
    let model = build_cadtra(FULL, 9).unwrap();
    let bytes = Checkpoint::from_model(&model).encode();
    let back = Checkpoint::decode(&bytes).unwrap().into_model().unwrap();
    assert_eq!(back.param_count().total, 196_293);
    let bits = |m: &ModelGraph| m.params().iter().flat_map(|p| p.tensor.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&model), bits(&back));
}

#[test]
fn checkpoint_width_mismatch_is_rejected() {
    let half = build_cadtra(WidthScale::new(1, 2).unwrap(), 1).unwrap();
    let ckpt = Checkpoint::decode(&Checkpoint::from_model(&half).encode()).unwrap();
    let mut full = build_cadtra(FULL, 1).unwrap();
    assert!(matches!(full.load_checkpoint(&ckpt), Err(FormatError::ArchitectureMismatch(_))));
    let mut other = build_cnn_dae(WidthScale::new(1, 2).unwrap(), 1).unwrap();
    assert!(matches!(other.load_checkpoint(&ckpt), Err(FormatError::ArchitectureMismatch(_))));
}
