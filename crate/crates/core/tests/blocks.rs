mod common;

use common::random_tensor;
use nightsign::graph::{Eval, Graph};
use nightsign::mirnet::{ModelParams, Net, NetConfig};
use nightsign::ops::{resize_bilinear, Scale};
use nightsign::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(seed: u64) -> ModelParams {
    ModelParams::init(&NetConfig::test().with_seed(seed)).unwrap()
}

#[test]
fn zeroed_fuse_makes_dau_pass_through() {
    let mut p = params(1);
    p.zero_prefix("rrg0.mrb0.dau_a0.fuse");
    let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(1), [1, 8, 6, 6], -1.0, 1.0);
    let mut g = Eval;
    let mut net = Net::new(&mut g, &p);
    let xv = net.g.input(x.clone());
    let y = net.dau("rrg0.mrb0.dau_a0", 8, &xv).unwrap();
    assert_eq!(*y, x);
}

#[test]
fn zeroed_final_conv_makes_mrb_pass_through() {
    let mut p = params(2);
    p.zero_prefix("rrg0.mrb0.conv");
    let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(2), [1, 8, 8, 8], -1.0, 1.0);
    let mut g = Eval;
    let mut net = Net::new(&mut g, &p);
    let xv = net.g.input(x.clone());
    let y = net.mrb("rrg0.mrb0", &xv).unwrap();
    assert_eq!(*y, x);
}

#[test]
fn zeroed_output_conv_makes_network_pass_through() {
    for cfg in [NetConfig::test(), NetConfig { n_scales: 3, n_rrg: 2, ..NetConfig::test() }] {
        let mut p = ModelParams::init(&cfg).unwrap();
        p.zero_prefix("conv_out");
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(3), [2, 3, 8, 8], 0.0, 1.0);
        assert_eq!(nightsign::mirnet::enhance(&p, &x).unwrap(), x);
    }
}

#[test]
fn skff_is_a_convex_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let p = params(trial);
        let branches: Vec<Tensor> = (0..2).map(|_| random_tensor(&mut rng, [1, 8, 4, 4], -3.0, 3.0)).collect();
        let mut g = Eval;
        let mut net = Net::new(&mut g, &p);
        net.record_gates();
        let vars: Vec<_> = branches.iter().map(|b| net.g.input(b.clone())).collect();
        let out = net.skff("rrg0.mrb0.skff0", 8, &vars).unwrap();
        let weights: Vec<Tensor> = net.gates().iter().map(|(_, w)| (**w).clone()).collect();
        assert_eq!(weights.len(), 2);
        for (a, b) in weights[0].data().iter().zip(weights[1].data()) {
            assert!((a + b - 1.0).abs() <= 1e-9);
            assert!(*a >= 0.0 && *b >= 0.0);
        }
        for (i, v) in out.data().iter().enumerate() {
            let (a, b) = (branches[0].data()[i], branches[1].data()[i]);
            let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
            assert!(*v >= a.min(b) - tol && *v <= a.max(b) + tol, "trial {trial}: {v} outside [{a}, {b}]");
        }
    }
}

#[test]
fn forward_rejects_indivisible_resolution() {
    let p = ModelParams::init(&NetConfig { n_scales: 3, ..NetConfig::test() }).unwrap();
    let err = nightsign::mirnet::enhance(&p, &Tensor::zeros([1, 3, 6, 8])).unwrap_err();
    assert!(matches!(err, nightsign::Error::Resolution { factor: 4, .. }), "{err}");
}

proptest! {
    #[test]
    fn exact_scales_preserve_the_mean(seed in any::<u64>(), h in 1usize..6, w in 1usize..6, which in 0usize..3) {
        let (scale, mult) = [(Scale::DOUBLE, 1), (Scale::QUADRUPLE, 1), (Scale::HALF, 2)][which];
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), [1, 2, h * mult, w * mult], -1.0, 1.0);
        let y = resize_bilinear(&x, scale).unwrap();
        prop_assert!((y.mean() - x.mean()).abs() < 1e-12);
    }

    #[test]
    fn constants_survive_every_scale(v in -5.0..5.0f64, which in 0usize..4) {
        let scale = [Scale::HALF, Scale::QUARTER, Scale::DOUBLE, Scale::QUADRUPLE][which];
        let y = resize_bilinear(&Tensor::full([1, 1, 8, 8], v), scale).unwrap();
        prop_assert!(y.data().iter().all(|&u| (u - v).abs() < 1e-12));
    }
}
