use irnet_core::model::{
    count_macs, count_params, format_k, layer_plan, load_checkpoint, load_checkpoint_as,
    save_checkpoint, ConvSlot,
};
use irnet_core::ops::{
    add, concat_channels, conv2d, global_contrast_pool, leaky_relu, pixel_shuffle, relu,
    scale_channels, sigmoid,
};
use irnet_core::{Error, IrnetModel, Mode, ModelConfig, Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(mode, blocks, channels, exact count, published K figure)`.
const TABLE: [(Mode, usize, usize, u64, &str); 14] = [
    (Mode::Itm, 1, 32, 22309, "22.31"),
    (Mode::Itm, 1, 48, 49302, "49.30"),
    (Mode::Itm, 1, 64, 86855, "86.86"),
    (Mode::Itm, 2, 32, 34343, "34.34"),
    (Mode::Itm, 2, 48, 76281, "76.28"),
    (Mode::Itm, 2, 64, 134731, "134.73"),
    (Mode::Itm, 2, 96, 301167, "301.17"),
    (Mode::Itm, 3, 64, 182607, "182.61"),
    (Mode::Itm, 4, 64, 230483, "230.48"),
    (Mode::SrItm, 1, 64, 276688, "276.69"),
    (Mode::SrItm, 5, 32, 119286, "119.29"),
    (Mode::SrItm, 5, 48, 265035, "265.04"),
    (Mode::SrItm, 5, 64, 468192, "468.19"),
    (Mode::SrItm, 5, 96, 1046730, "1046.73"),
];

fn config(mode: Mode, n: usize, c: usize) -> ModelConfig {
    ModelConfig::for_mode(mode).with_blocks(n).with_channels(c)
}

/// Independent layer arithmetic: kh*kw*cin*cout + cout per convolution.
fn arithmetic_oracle(mode: Mode, n: u64, c: u64) -> u64 {
    let conv = |k: u64, i: u64, o: u64| k * k * i * o + o;
    let block = conv(3, c, c / 2)
        + conv(3, c / 2, c)
        + conv(1, c, c / 2)
        + conv(1, c, c)
        + conv(1, c, c / 16)
        + conv(1, c / 16, c);
    let body = conv(1, 3, c) + n * block + conv(1, n * c, c) + conv(3, c, c);
    match mode {
        Mode::Itm => body + conv(3, c, 3),
        Mode::SrItm => body + conv(3, c, c) + conv(3, c, 4 * c) + conv(3, c, 12),
    }
}

#[test]
fn parameter_count_table() {
    for (mode, n, c, exact, published) in TABLE {
        let cfg = config(mode, n, c);
        assert_eq!(count_params(&cfg).unwrap(), exact, "{mode} {n} {c}");
        assert_eq!(arithmetic_oracle(mode, n as u64, c as u64), exact);
        assert_eq!(format_k(exact), format!("{published}K"));
        let built = IrnetModel::build(cfg, 0).unwrap();
        assert_eq!(built.num_params() as u64, exact);
    }
}

#[test]
fn compute_cost_at_4k() {
    for (n, c, macs_g, flops_g) in [(2, 64, 1104.15, 2211.49), (1, 48, 404.10, 810.20)] {
        let cost = count_macs(&config(Mode::Itm, n, c), 2160, 3840).unwrap();
        let (m, f) = (cost.macs as f64 / 1e9, cost.flops as f64 / 1e9);
        assert!((m - macs_g).abs() / macs_g < 0.01, "{m}");
        assert!((f - flops_g).abs() / flops_g < 0.01, "{f}");
        assert_eq!(cost.flops, 2 * cost.macs);
    }
}

#[test]
fn plan_names_match_built_parameters() {
    for (mode, n, c, ..) in TABLE {
        let cfg = config(mode, n, c);
        let model = IrnetModel::build(cfg.clone(), 0).unwrap();
        for layer in layer_plan(&cfg).unwrap() {
            let id = model
                .params()
                .find(&format!("{}.kernel", layer.name))
                .unwrap();
            assert_eq!(
                model.params().get(id).dims(),
                &[layer.out_ch, layer.in_ch, layer.k, layer.k]
            );
        }
    }
}

fn conv(m: &IrnetModel, slot: ConvSlot, x: &Tensor) -> Tensor {
    conv2d(x, &m.conv_weights(slot), slot.pad).unwrap()
}

/// Hand-composed network from the primitive kernels.
fn composed(m: &IrnetModel, x: &Tensor) -> Tensor {
    let cfg = m.config();
    let slope = cfg.lrelu_slope;
    let mut feat = conv(m, m.head, x);
    let mut outs = Vec::new();
    for g in &m.groups {
        let f1 = leaky_relu(&conv(m, g.irb.conv1, &feat), slope);
        let f2 = conv(m, g.irb.conv2, &f1);
        let fused = conv(m, g.irb.fuse, &add(&feat, &f2).unwrap());
        let irb = conv(m, g.irb.out, &concat_channels(&[&fused, &f1]).unwrap());
        let pooled = global_contrast_pool(&irb);
        let w = sigmoid(&conv(m, g.cca.up, &relu(&conv(m, g.cca.down, &pooled))));
        let att = add(&irb, &scale_channels(&irb, &w).unwrap()).unwrap();
        feat = add(&feat, &att).unwrap();
        outs.push(feat.clone());
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    let fused = leaky_relu(&conv(m, m.fusion1, &concat_channels(&refs).unwrap()), slope);
    let body = conv(m, m.tail, &conv(m, m.fusion2, &fused));
    match &m.upsampler {
        None => body,
        Some(up) => {
            let y = relu(&pixel_shuffle(&conv(m, up.up1, &body), 2).unwrap());
            pixel_shuffle(&conv(m, up.up2, &y), 2).unwrap()
        }
    }
}

#[test]
fn forward_matches_hand_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for cfg in [config(Mode::Itm, 2, 16), config(Mode::SrItm, 1, 16)] {
        let m = IrnetModel::build(cfg, 17).unwrap();
        let x = Tensor::uniform(Shape::new(2, 3, 10, 9), 0.0, 1.0, &mut rng);
        let got = m.forward(&x).unwrap();
        let want = composed(&m, &x);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-5);
    }
}

#[test]
fn sritm_output_is_four_times_input() {
    let m = IrnetModel::build(config(Mode::SrItm, 1, 16), 0).unwrap();
    for (h, w) in [(8, 8), (5, 7)] {
        let y = m.forward(&Tensor::zeros(Shape::new(1, 3, h, w))).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 4 * h, 4 * w));
    }
}

#[test]
fn kaiming_variance() {
    let m = IrnetModel::build(ModelConfig::itm(), 99).unwrap();
    for p in m.params().iter().filter(|p| p.name().ends_with(".kernel")) {
        let d = p.dims();
        let fan_in = (d[1] * d[2] * d[3]) as f64;
        let n = p.value.len() as f64;
        let var = p
            .value
            .data()
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            / n;
        let expected = 2.0 / fan_in;
        // Relative standard error of a sample variance is sqrt(2/n).
        let tol = 5.0 * (2.0 / n).sqrt();
        assert!(
            (var / expected - 1.0).abs() < tol,
            "{} {var} {expected}",
            p.name()
        );
    }
    for p in m.params().iter().filter(|p| p.name().ends_with(".bias")) {
        assert!(p.value.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn f1_path_is_live() {
    let mut m = IrnetModel::build(config(Mode::Itm, 1, 16), 5).unwrap();
    let x = Tensor::uniform(
        Shape::new(1, 3, 12, 12),
        0.0,
        1.0,
        &mut ChaCha8Rng::seed_from_u64(6),
    );
    let full = m.forward(&x).unwrap();
    // Columns C/2.. of the out kernel read F1 after the concat.
    let id = m.groups[0].irb.out.kernel;
    let kernel = &mut m.params_mut().get_mut(id).value;
    let s = kernel.shape();
    for o in 0..s.n {
        for i in s.c / 2..s.c {
            kernel.set(o, i, 0, 0, 0.0);
        }
    }
    let ablated = m.forward(&x).unwrap();
    assert!(full.max_abs_diff(&ablated) > 1e-4);

    let no_f1 = ModelConfig {
        irb_f1: false,
        ..config(Mode::Itm, 1, 16)
    };
    let baseline = IrnetModel::build(no_f1.clone(), 5).unwrap();
    assert_eq!(baseline.forward(&x).unwrap().shape(), full.shape());
    assert!(count_params(&no_f1).unwrap() < count_params(&config(Mode::Itm, 1, 16)).unwrap());
}

#[test]
fn single_threaded_forward_is_deterministic() {
    let m = IrnetModel::build(config(Mode::Itm, 2, 16), 8).unwrap();
    let x = Tensor::uniform(
        Shape::new(1, 3, 16, 16),
        0.0,
        1.0,
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let a = pool.install(|| m.forward(&x).unwrap());
    let b = pool.install(|| m.forward(&x).unwrap());
    assert_eq!(a, b);
}

#[test]
fn checkpoint_guard_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = IrnetModel::build(ModelConfig::itm(), 1).unwrap();
    save_checkpoint(&m, &path).unwrap();
    let (loaded, cfg) = load_checkpoint(&path).unwrap();
    assert_eq!(&cfg, m.config());
    assert_eq!(loaded.params(), m.params());
    let other = ModelConfig::itm().with_blocks(3);
    assert!(matches!(
        load_checkpoint_as(&path, &other),
        Err(Error::Config(_))
    ));
    assert!(load_checkpoint_as(&path, &ModelConfig::itm()).is_ok());
}
