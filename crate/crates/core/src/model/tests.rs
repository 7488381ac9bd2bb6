use super::*;
use crate::numerics::{finite_difference_grad, relative_error, GRADCHECK_EPS, GRADCHECK_TOL};
use crate::spectral::rfft;
use core::f64::consts::PI;

fn toy(levels: usize, lookback: usize, embed_dim: usize) -> ModelConfig {
    ModelConfig {
        lookback,
        horizon: 4,
        embed_dim,
        levels,
        seed: 17,
        ..Default::default()
    }
}

fn random_batch(rng: &mut Rng, b: usize, t: usize) -> Tensor {
    Tensor::new(&[b, t], (0..b * t).map(|_| rng.gaussian()).collect()).unwrap()
}

/// Delta kernels, zero conv bias, zero KAN coefficients.
fn make_learners_identity(model: &mut TimeKanModel) {
    for row in &mut model.learners {
        for l in row {
            let m = l.conv.kernel_size();
            let channels = l.conv.channels();
            let kd = l.conv.kernels.value.data_mut();
            kd.fill(0.0);
            for c in 0..channels {
                kd[c * m + m / 2] = 1.0;
            }
            l.conv.bias.value.fill(0.0);
            if let Branch::Kan(k) = &mut l.branch {
                k.theta.value.fill(0.0);
            }
        }
    }
}

#[test]
fn level_lengths_follow_window() {
    let model = TimeKanModel::new(ModelConfig {
        levels: 3,
        lookback: 8,
        ..toy(3, 8, 2)
    })
    .unwrap();
    let x = Tensor::zeros(&[2, 8]).unwrap();
    let (_, levels) = model.preprocess(&x).unwrap();
    let lens: Vec<usize> = levels.iter().map(|l| l.shape()[1]).collect();
    assert_eq!(lens, vec![8, 4, 2]);
}

#[test]
fn constant_input_gives_constant_levels() {
    let model = TimeKanModel::new(toy(2, 8, 3)).unwrap();
    let x = Tensor::filled(&[1, 8], 2.5).unwrap();
    let (_, levels) = model.preprocess(&x).unwrap();
    for level in &levels {
        let (_, l, c) = level.dims3().unwrap();
        for ch in 0..c {
            let first = level.data()[ch];
            for t in 0..l {
                assert_eq!(level.data()[t * c + ch], first);
            }
        }
    }
}

#[test]
fn raw_level_two_is_window_means() {
    let model = TimeKanModel::new(toy(2, 8, 2)).unwrap();
    let xs: Vec<f64> = (0..8)
        .map(|n| libm::sin(2.0 * PI * n as f64 / 8.0) + 0.5 * libm::cos(2.0 * PI * 3.0 * n as f64 / 8.0))
        .collect();
    let raw = model.raw_levels(&Tensor::new(&[1, 8], xs.clone()).unwrap()).unwrap();
    let expected: Vec<f64> = xs.chunks(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    assert_eq!(raw[1].data(), expected.as_slice());
}

#[test]
fn rejects_indivisible_lookback() {
    assert!(TimeKanModel::new(toy(4, 12, 2)).is_err());
}

#[test]
fn decompose_zero_and_base_case() {
    let model = TimeKanModel::new(toy(2, 8, 2)).unwrap();
    let zeros = vec![Tensor::zeros(&[1, 8, 2]).unwrap(), Tensor::zeros(&[1, 4, 2]).unwrap()];
    let bands = model.decompose(&zeros).unwrap();
    assert_eq!(bands.len(), 2);
    assert!(bands.iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
    assert!(model.mix(&bands).unwrap().iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn residual_of_low_band_has_no_low_energy() {
    let model = TimeKanModel::new(toy(2, 16, 1)).unwrap();
    let low = |n: usize, len: usize| libm::cos(2.0 * PI * n as f64 / len as f64 + 0.3);
    let high = |n: usize| 0.7 * libm::sin(2.0 * PI * 6.0 * n as f64 / 16.0);
    let x1: Vec<f64> = (0..16).map(|n| low(n, 16) + high(n)).collect();
    let x2: Vec<f64> = (0..8).map(|n| low(n, 8)).collect();
    let levels = vec![
        Tensor::new(&[1, 16, 1], x1).unwrap(),
        Tensor::new(&[1, 8, 1], x2).unwrap(),
    ];
    let bands = model.decompose(&levels).unwrap();
    let spec = rfft(bands[0].data());
    let energy: Vec<f64> = spec.coeffs.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();
    let low_energy: f64 = energy[..4].iter().sum();
    assert!(low_energy <= 1e-6 * total, "{low_energy} vs {total}");
}

#[test]
fn mix_inverts_decompose() {
    let mut rng = Rng::new(3);
    for (k, t) in [(2, 8), (3, 16), (4, 48)] {
        let model = TimeKanModel::new(toy(k, t, 3)).unwrap();
        let levels: Vec<Tensor> = model
            .config()
            .level_lengths()
            .iter()
            .map(|&l| Tensor::new(&[2, l, 3], (0..2 * l * 3).map(|_| rng.gaussian()).collect()).unwrap())
            .collect();
        let back = model.mix(&model.decompose(&levels).unwrap()).unwrap();
        for (a, b) in levels.iter().zip(&back) {
            assert!(a.max_abs_diff(b).unwrap() <= 1e-9);
        }
    }
}

#[test]
fn mix_two_levels_by_hand() {
    let model = TimeKanModel::new(toy(2, 4, 1)).unwrap();
    let f1 = Tensor::new(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let f2 = Tensor::new(&[1, 2, 1], vec![3.0, 1.0]).unwrap();
    // up([3, 1]) to length 4: mean 2, Nyquist split -> 2 + cos(pi n / 2)
    let expected = [1.0 + 3.0, 2.0 + 2.0, 3.0 + 1.0, 4.0 + 2.0];
    let mixed = model.mix(&[f1, f2.clone()]).unwrap();
    for (a, b) in mixed[0].data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(mixed[1], f2);
}

#[test]
fn multi_order_assignment() {
    let model = TimeKanModel::new(ModelConfig::default()).unwrap();
    assert_eq!(model.level_orders(), vec![Some(5), Some(4), Some(3), Some(2)]);
    let fixed = TimeKanModel::new(ModelConfig {
        order_policy: OrderPolicy::Fixed(2),
        ..Default::default()
    })
    .unwrap();
    assert!(fixed.level_orders().iter().all(|&o| o == Some(2)));
    let mlp = TimeKanModel::new(ModelConfig {
        order_policy: OrderPolicy::Mlp,
        ..Default::default()
    })
    .unwrap();
    assert!(mlp.level_orders().iter().all(|o| o.is_none()));
}

#[test]
fn zero_learners_give_zero_bands() {
    let mut model = TimeKanModel::new(toy(3, 16, 2)).unwrap();
    for p in model.parameters_mut() {
        p.value.fill(0.0);
    }
    let mut rng = Rng::new(1);
    let bands: Vec<Tensor> = [16, 8, 4]
        .iter()
        .map(|&l| Tensor::new(&[1, l, 2], (0..l * 2).map(|_| rng.gaussian()).collect()).unwrap())
        .collect();
    let learned = model.learn(0, &bands).unwrap();
    assert!(learned.iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn identity_learners_reduce_to_head_after_embedding() {
    let mut model = TimeKanModel::new(toy(3, 16, 2)).unwrap();
    make_learners_identity(&mut model);
    let mut rng = Rng::new(9);
    let x = random_batch(&mut rng, 2, 16);
    let (norm, _) = TimeKanModel::normalize(&x).unwrap();
    let (_, levels) = model.preprocess(&norm).unwrap();
    let bands = model.decompose(&levels).unwrap();
    assert_eq!(model.learn(0, &bands).unwrap(), bands);
    let back = model.mix(&bands).unwrap();
    for (a, b) in levels.iter().zip(&back) {
        assert!(a.max_abs_diff(b).unwrap() <= 1e-9);
    }
}

#[test]
fn zero_parameters_forecast_window_mean() {
    let mut model = TimeKanModel::new(toy(2, 8, 2)).unwrap();
    for p in model.parameters_mut() {
        p.value.fill(0.0);
    }
    let x = Tensor::new(&[1, 8], vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 2.0, 7.0]).unwrap();
    let y = model.forward(&x).unwrap();
    assert!(y.data().iter().all(|v| (v - 3.0).abs() < 1e-12));

    let mut plain = TimeKanModel::new(ModelConfig {
        instance_norm: false,
        ..toy(2, 8, 2)
    })
    .unwrap();
    for p in plain.parameters_mut() {
        p.value.fill(0.0);
    }
    plain.head_channel.bias.value.fill(0.25);
    let y = plain.forward(&x).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.25));
}

#[test]
fn rows_are_independent() {
    let model = TimeKanModel::new(toy(3, 16, 4)).unwrap();
    let mut rng = Rng::new(12);
    let row = random_batch(&mut rng, 1, 16);
    let doubled = Tensor::new(&[2, 16], [row.data(), row.data()].concat()).unwrap();
    let single = model.forward(&row).unwrap();
    let pair = model.forward(&doubled).unwrap();
    assert_eq!(&pair.data()[..4], single.data());
    assert_eq!(&pair.data()[4..], single.data());
}

#[test]
fn forward_is_deterministic() {
    let cfg = toy(3, 16, 4);
    let x = random_batch(&mut Rng::new(5), 3, 16);
    let a = TimeKanModel::new(cfg.clone()).unwrap().forward(&x).unwrap();
    let b = TimeKanModel::new(cfg).unwrap().forward(&x).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn non_finite_input_is_rejected() {
    let model = TimeKanModel::new(toy(2, 8, 2)).unwrap();
    let mut x = Tensor::zeros(&[1, 8]).unwrap();
    x.data_mut()[3] = f64::INFINITY;
    assert!(matches!(model.forward(&x), Err(Error::NonFinite { .. })));
}

#[test]
fn parameter_names_are_unique_and_grads_align() {
    let model = TimeKanModel::new(ModelConfig {
        blocks: 2,
        ..Default::default()
    })
    .unwrap();
    let names: Vec<&str> = model.parameters().iter().map(|p| p.name.as_str()).collect();
    let mut dedup = names.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), names.len());

    let x = random_batch(&mut Rng::new(1), 2, 96);
    let (_, tape) = model.forward_with_tape(&x).unwrap();
    let grads = model.gradients(&tape, &Tensor::filled(&[2, 96], 1.0).unwrap()).unwrap();
    for (p, g) in model.parameters().iter().zip(&grads.tensors) {
        assert_eq!(p.shape(), g.shape(), "{}", p.name);
    }
}

#[test]
fn default_param_count() {
    let model = TimeKanModel::new(ModelConfig::default()).unwrap();
    let head = 96 * 96 + 96 + 16 + 1;
    let embeddings = 4 * (16 + 16);
    let kans = 16 * 16 * (6 + 5 + 4 + 3);
    let convs = 4 * (16 * 3 + 16);
    assert_eq!(model.count_params(), head + embeddings + kans + convs);
    assert_eq!(model.count_params(), 14_321);
}

#[test]
fn param_accounting_identities() {
    let one = TimeKanModel::new(ModelConfig::default()).unwrap();
    let two = TimeKanModel::new(ModelConfig {
        blocks: 2,
        ..Default::default()
    })
    .unwrap();
    let per_block = 16 * 16 * 18 + 4 * (16 * 3 + 16);
    assert_eq!(two.count_params() - one.count_params(), per_block);

    let kan_params = |m: &TimeKanModel| -> usize {
        m.parameters().iter().filter(|p| p.name.contains(".kan.")).map(|p| p.len()).sum()
    };
    let wide = TimeKanModel::new(ModelConfig {
        embed_dim: 32,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(kan_params(&wide), 4 * kan_params(&one));
}

#[test]
fn mac_estimate_is_linear() {
    let m1 = TimeKanModel::new(ModelConfig::default()).unwrap();
    let m2 = TimeKanModel::new(ModelConfig {
        blocks: 2,
        ..Default::default()
    })
    .unwrap();
    let m3 = TimeKanModel::new(ModelConfig {
        blocks: 3,
        ..Default::default()
    })
    .unwrap();
    let e1 = m1.estimate_macs(1);
    assert_eq!(m1.estimate_macs(32).total, 32 * e1.total);
    let (t1, t2, t3) = (m1.estimate_macs(8).total, m2.estimate_macs(8).total, m3.estimate_macs(8).total);
    assert_eq!(t2 - t1, t3 - t2);
    assert_eq!(t2 - t1, 8 * e1.per_block);
}

#[test]
fn zero_upstream_gives_zero_grads_and_linearity() {
    let model = TimeKanModel::new(toy(3, 16, 2)).unwrap();
    let x = random_batch(&mut Rng::new(2), 2, 16);
    let (_, tape) = model.forward_with_tape(&x).unwrap();
    let zero = model.gradients(&tape, &Tensor::zeros(&[2, 4]).unwrap()).unwrap();
    assert!(zero.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    let up = random_batch(&mut Rng::new(8), 2, 4);
    let g1 = model.gradients(&tape, &up).unwrap();
    let g2 = model.gradients(&tape, &up.scale(2.0)).unwrap();
    for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
    assert!(model.gradients(&tape, &Tensor::zeros(&[3, 4]).unwrap()).is_err());
}

#[test]
fn backward_accumulates() {
    let mut model = TimeKanModel::new(toy(2, 8, 2)).unwrap();
    let x = random_batch(&mut Rng::new(4), 2, 8);
    let up = random_batch(&mut Rng::new(5), 2, 4);
    let (_, tape) = model.forward_with_tape(&x).unwrap();
    model.backward(&tape, &up).unwrap();
    let once: Vec<Tensor> = model.parameters().iter().map(|p| p.grad.clone()).collect();
    model.backward(&tape, &up).unwrap();
    for (p, g) in model.parameters().iter().zip(&once) {
        assert_eq!(p.grad, g.scale(2.0));
    }
}

fn mse_loss(model: &TimeKanModel, x: &Tensor, target: &Tensor) -> f64 {
    let y = model.forward(x).unwrap();
    y.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

#[test]
fn whole_model_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        lookback: 8,
        horizon: 4,
        embed_dim: 2,
        levels: 2,
        seed: 31,
        ..Default::default()
    };
    let model = TimeKanModel::new(cfg).unwrap();
    let mut rng = Rng::new(77);
    let x = random_batch(&mut rng, 2, 8);
    let target = random_batch(&mut rng, 2, 4);
    let (y, tape) = model.forward_with_tape(&x).unwrap();
    let n = y.len() as f64;
    let up = y.sub(&target).unwrap().scale(2.0 / n);
    let grads = model.gradients(&tape, &up).unwrap();

    for (idx, analytic) in grads.tensors.iter().enumerate() {
        let numeric = finite_difference_grad(
            |v| {
                let mut probe = model.clone();
                probe.parameters_mut()[idx].value = v.clone();
                mse_loss(&probe, &x, &target)
            },
            &model.parameters()[idx].value,
            GRADCHECK_EPS,
        )
        .unwrap();
        for (a, b) in analytic.data().iter().zip(numeric.data()) {
            assert!(relative_error(*a, *b) <= GRADCHECK_TOL, "{}: {a} vs {b}", model.parameters()[idx].name);
        }
    }
}
