mod common;

use common::{models_dir, toy_cnn, toy_mlp};
use nearzero::netrunner::{
    accuracy, direct_conv, lower_conv, sweep, Conv2d, Engine, Layer, ModeSchedule, Shape, SweepConfig,
};
use nearzero::refmodel::dense_preactivations;
use nearzero::{FixedFormat, FixedVector, NzThreshold, SkipMode};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modes(fmt: FixedFormat) -> Vec<SkipMode> {
    let mut m = vec![SkipMode::Dense, SkipMode::ZeroSkip];
    m.extend([0, 8, 14, 16, 18, 20, 24, 32].map(|l| SkipMode::NzSkip(NzThreshold::new(l, fmt).unwrap())));
    m
}

#[test]
fn mlp_engines_agree() {
    let (g, data) = toy_mlp();
    for mode in modes(g.format()) {
        for s in data.iter().step_by(15) {
            let r = g.forward(&s.input, &mode.into(), Engine::CrossCheck).unwrap();
            let reference = g.forward(&s.input, &mode.into(), Engine::Reference).unwrap();
            assert_eq!(r.output, reference.output);
            assert_eq!(r.layers, reference.layers);
            assert!(r.cycles > 0);
        }
    }
}

#[test]
fn cnn_engines_agree() {
    let (g, data) = toy_cnn();
    for mode in modes(g.format()) {
        for s in data.iter().step_by(50) {
            g.forward(&s.input, &mode.into(), Engine::CrossCheck).unwrap();
        }
    }
}

#[test]
fn dense_and_zeroskip_forward_identically() {
    for (g, data) in [toy_mlp(), toy_cnn()] {
        for s in data.iter().step_by(10) {
            let d = g.forward(&s.input, &SkipMode::Dense.into(), Engine::Reference).unwrap();
            let z = g.forward(&s.input, &SkipMode::ZeroSkip.into(), Engine::Reference).unwrap();
            assert_eq!(d.output, z.output);
        }
    }
}

fn check_lowering(conv: &Conv2d, shape: Shape, x: &FixedVector) {
    let (m, plan) = lower_conv(conv, shape, x.format()).unwrap();
    let direct = direct_conv(conv, shape, x).unwrap();
    let positions = plan.out_h * plan.out_w;
    assert_eq!(direct.len(), m.rows() * positions);
    for pos in 0..positions {
        let lowered = dense_preactivations(&m, &plan.gather(pos, x)).unwrap();
        for (oc, acc) in lowered.iter().enumerate() {
            assert_eq!(acc.raw(), direct[oc * positions + pos].raw(), "oc {oc} pos {pos}");
        }
    }
}

#[test]
fn shipped_conv_lowering_matches_direct_convolution() {
    let (g, data) = toy_cnn();
    let Some(Layer::Conv2d(conv)) = g.layers().iter().find(|l| matches!(l, Layer::Conv2d(_))) else {
        panic!("toy CNN has a conv layer");
    };
    for s in data.iter().take(5) {
        check_lowering(conv, g.input_shape(), &s.input);
    }
}

#[test]
fn random_conv_lowering_matches_direct_convolution() {
    let fmt = FixedFormat::Q8_8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let (c, h, w) = (rng.gen_range(1..=3), rng.gen_range(3..=9), rng.gen_range(3..=9));
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let oc = rng.gen_range(1..=5);
        let conv = Conv2d {
            out_channels: oc,
            in_channels: c,
            kernel_h: kh,
            kernel_w: kw,
            stride: rng.gen_range(1..=2),
            padding: rng.gen_range(0..=1),
            weights: (0..oc * c * kh * kw).map(|_| rng.gen_range(-600..600)).collect(),
            bias: None,
        };
        let x = FixedVector::from_raw((0..c * h * w).map(|_| rng.gen_range(-32768..32768)).collect(), fmt).unwrap();
        check_lowering(&conv, Shape::Chw { c, h, w }, &x);
    }
}

#[test]
fn mlp_sparsity_grows_with_depth() {
    let (g, data) = toy_mlp();
    let report = sweep(&g, &data, &SweepConfig { thresholds: vec![], engine: Engine::Reference });
    assert!(report.is_err(), "an empty threshold list is rejected");
    let base = &sweep(
        &g,
        &data,
        &SweepConfig { thresholds: vec![nearzero::netrunner::ThresholdSpec::Level(16)], engine: Engine::Reference },
    )
    .unwrap()
    .baseline;
    let z: Vec<f64> = base.layers.iter().map(|l| l.stats.zero_sparsity()).collect();
    assert!(z.windows(2).all(|p| p[0] < p[1]), "{z:?}");
}

#[test]
fn keep_all_accuracy_equals_dense() {
    let (g, data) = toy_mlp();
    let fmt = g.format();
    let dense = accuracy(&g, &data, &SkipMode::Dense.into(), Engine::Reference).unwrap();
    let keep_all = ModeSchedule::from(SkipMode::NzSkip(NzThreshold::keep_all(fmt)));
    assert_eq!(accuracy(&g, &data, &keep_all, Engine::Reference).unwrap(), dense);
    assert!(dense > 0.9, "quantized MLP accuracy {dense}");
}

#[test]
fn full_sweep_matches_golden_csv() {
    let (g, data) = toy_mlp();
    let report = sweep(&g, &data, &SweepConfig::full_range(g.format(), Engine::Reference)).unwrap();
    let golden = std::fs::read_to_string(models_dir().join("toy_mlp_sweep.csv")).unwrap();
    assert_eq!(report.to_csv(), golden);
    let kept: Vec<u64> = report.points.iter().map(|p| p.total.kept_pairs()).collect();
    assert!(kept.windows(2).all(|k| k[0] >= k[1]), "kept pairs shrink as L falls");
}
