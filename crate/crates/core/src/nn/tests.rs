use super::*;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(arch: &Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init_uniform(arch, 1.5, &mut rng).unwrap();
    for layer in p.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    p
}

/// Dense matrix-vector oracle written out with explicit loops.
fn oracle_forward(params: &ModelParams, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for layer in params.layers() {
        let mut y = vec![0.0; layer.out_dim()];
        for (o, yo) in y.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for (i, xi) in x.iter().enumerate() {
                acc += layer.weights[[o, i]] * xi;
            }
            *yo = match layer.activation {
                Activation::Identity => acc,
                Activation::Relu => acc.max(0.0),
                Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
            };
        }
        x = y;
    }
    x
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

#[test]
fn zero_model_gives_zero_logits() {
    let arch = Architecture::mlp(5, &[4], 3, Activation::Identity);
    let p = ModelParams::zeros(&arch).unwrap();
    let (logits, _) = forward(&p, &[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
    assert_eq!(logits, vec![0.0; 3]);
}

#[test]
fn identity_layer_passes_input_through() {
    let layer = Layer {
        weights: Array2::eye(3),
        bias: Array1::zeros(3),
        activation: Activation::Identity,
    };
    let p = ModelParams::new(vec![layer]).unwrap();
    let (logits, _) = forward(&p, &[0.25, -1.5, 7.0]).unwrap();
    assert_eq!(logits, vec![0.25, -1.5, 7.0]);
}

#[test]
fn forward_matches_loop_oracle() {
    let arch = Architecture::mlp(7, &[6], 3, Activation::Identity);
    let p = random_net(&arch, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (logits, _) = forward(&p, &x).unwrap();
    for (a, b) in logits.iter().zip(oracle_forward(&p, &x)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let p = ModelParams::zeros(&Architecture::mlp(4, &[], 2, Activation::Identity)).unwrap();
    assert!(matches!(forward(&p, &[1.0; 3]), Err(Error::InvalidArgument(_))));
    assert!(matches!(predict_proba(&p, &[1.0; 5]), Err(Error::InvalidArgument(_))));
}

#[test]
fn non_chaining_layers_are_rejected() {
    let a = Layer {
        weights: Array2::zeros((3, 2)),
        bias: Array1::zeros(3),
        activation: Activation::Relu,
    };
    let b = Layer {
        weights: Array2::zeros((2, 4)),
        bias: Array1::zeros(2),
        activation: Activation::Identity,
    };
    assert!(ModelParams::new(vec![a, b]).is_err());
}

#[test]
fn xent_uniform_logits_is_log_k() {
    let (loss, _) = softmax_xent(&[0.3; 5], 2).unwrap();
    assert!((loss - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn xent_is_stable_for_huge_logits() {
    let (loss, grad) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
    assert!(loss.is_finite() && loss < 1e-12);
    assert!(grad.iter().all(|g| g.is_finite()));
}

#[test]
fn xent_rejects_non_finite_and_bad_target() {
    assert!(matches!(softmax_xent(&[f64::NAN, 0.0], 0), Err(Error::Numeric { .. })));
    assert!(matches!(softmax_xent(&[0.0, 0.0], 2), Err(Error::InvalidArgument(_))));
}

#[test]
fn xent_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let target = rng.gen_range(0..4);
        let (_, grad) = softmax_xent(&logits, target).unwrap();
        let h = 1e-5;
        for j in 0..4 {
            let mut up = logits.clone();
            up[j] += h;
            let mut dn = logits.clone();
            dn[j] -= h;
            let fd = (softmax_xent(&up, target).unwrap().0 - softmax_xent(&dn, target).unwrap().0) / (2.0 * h);
            assert!(rel_err(grad[j], fd) < 1e-6, "{} vs {fd}", grad[j]);
        }
    }
}

fn loss_of(params: &ModelParams, x: &[f64], target: usize) -> f64 {
    softmax_xent(&oracle_forward(params, x), target).unwrap().0
}

#[test]
fn backward_matches_finite_differences() {
    let h = 1e-5;
    let architectures = [
        Architecture::mlp(6, &[5, 4], 2, Activation::Identity),
        Architecture::mlp(3, &[8], 3, Activation::Sigmoid),
    ];
    for (ai, arch) in architectures.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + ai as u64);
        let params = random_net(arch, 7 + ai as u64);
        let x: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = 1;
        let (logits, cache) = forward(&params, &x).unwrap();
        let (_, g) = softmax_xent(&logits, target).unwrap();
        let grads = backward(&params, &cache, &g).unwrap();

        for k in 0..params.layers().len() {
            let (rows, cols) = params.layers()[k].weights.dim();
            for o in 0..rows {
                for i in 0..cols {
                    let mut up = params.clone();
                    up.layers_mut()[k].weights[[o, i]] += h;
                    let mut dn = params.clone();
                    dn.layers_mut()[k].weights[[o, i]] -= h;
                    let fd = (loss_of(&up, &x, target) - loss_of(&dn, &x, target)) / (2.0 * h);
                    let an = grads.weights[k][[o, i]];
                    assert!(rel_err(an, fd) < 1e-5, "layer {k} w[{o},{i}]: {an} vs {fd}");
                }
                let mut up = params.clone();
                up.layers_mut()[k].bias[o] += h;
                let mut dn = params.clone();
                dn.layers_mut()[k].bias[o] -= h;
                let fd = (loss_of(&up, &x, target) - loss_of(&dn, &x, target)) / (2.0 * h);
                assert!(rel_err(grads.biases[k][o], fd) < 1e-5);
            }
        }
        for i in 0..x.len() {
            let mut up = x.clone();
            up[i] += h;
            let mut dn = x.clone();
            dn[i] -= h;
            let fd = (loss_of(&params, &up, target) - loss_of(&params, &dn, target)) / (2.0 * h);
            assert!(rel_err(grads.input[[0, i]], fd) < 1e-5);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let arch = Architecture::mlp(4, &[3], 2, Activation::Identity);
    let p = random_net(&arch, 1);
    let (_, cache) = forward(&p, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let g = backward(&p, &cache, &[0.0, 0.0]).unwrap();
    assert!(g.is_zero());
    assert!(backward(&p, &cache, &[0.0; 3]).is_err());
}

fn separable_set() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pairs = Vec::new();
    while pairs.len() < 80 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let margin = x[0] + 0.5 * x[1];
        if margin.abs() < 0.2 {
            continue;
        }
        pairs.push((x, usize::from(margin > 0.0)));
    }
    Dataset::from_pairs(&pairs).unwrap()
}

fn accuracy(p: &ModelParams, d: &Dataset) -> f64 {
    let probs = predict_proba_batch(p, d.inputs.view()).unwrap();
    let hits = probs
        .rows()
        .into_iter()
        .zip(&d.targets)
        .filter(|(r, &t)| argmax(r.as_slice().unwrap()) == t)
        .count();
    hits as f64 / d.len() as f64
}

#[test]
fn separable_toy_set_is_learned() {
    let d = separable_set();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 50,
        batch_size: 8,
        seed: 4,
        weight_init_scale: 1.0,
    };
    let p = train_classifier(&d, &cfg, &Architecture::mlp(2, &[], 2, Activation::Identity)).unwrap();
    assert_eq!(accuracy(&p, &d), 1.0);
}

#[test]
fn training_is_deterministic() {
    let d = separable_set();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let arch = Architecture::mlp(2, &[6], 2, Activation::Identity);
    let a = train_classifier(&d, &cfg, &arch).unwrap();
    let b = train_classifier(&d, &cfg, &arch).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let d = separable_set();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let arch = Architecture::mlp(2, &[6], 2, Activation::Identity);
    let trained = train_classifier(&d, &cfg, &arch).unwrap();
    let init = ModelParams::init_uniform(&arch, cfg.weight_init_scale, &mut cfg.init_rng()).unwrap();
    assert_eq!(trained, init);
}

#[test]
fn empty_dataset_is_rejected() {
    let d = Dataset::new(Array2::zeros((0, 2)), vec![]).unwrap();
    let arch = Architecture::mlp(2, &[], 2, Activation::Identity);
    assert!(matches!(
        train_classifier(&d, &TrainConfig::default(), &arch),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn predict_proba_properties() {
    let zero = ModelParams::zeros(&Architecture::mlp(3, &[], 4, Activation::Identity)).unwrap();
    assert_eq!(predict_proba(&zero, &[1.0, 2.0, 3.0]).unwrap(), vec![0.25; 4]);

    let far = softmax(&[2.0, 2.0 + 800.0]);
    assert_eq!(far, vec![0.0, 1.0]);

    let p = random_net(&Architecture::mlp(5, &[4], 3, Activation::Identity), 21);
    let x = [0.3, -0.1, 0.8, 0.0, -0.5];
    let logits = oracle_forward(&p, &x);
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let probs = predict_proba(&p, &x).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for (a, b) in probs.iter().zip(e.iter().map(|v| v / s)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
}

#[test]
fn full_batch_descent_never_increases_loss() {
    let d = separable_set();
    let mut p = random_net(&Architecture::mlp(2, &[5], 2, Activation::Identity), 2);
    let mean_loss = |p: &ModelParams| {
        let out = infer_batch(p, d.inputs.view()).unwrap();
        out.rows()
            .into_iter()
            .zip(&d.targets)
            .map(|(r, &t)| softmax_xent(r.as_slice().unwrap(), t).unwrap().0)
            .sum::<f64>()
            / d.len() as f64
    };
    let mut prev = mean_loss(&p);
    for _ in 0..100 {
        let cache = forward_batch(&p, d.inputs.view()).unwrap();
        let mut up = Vec::new();
        for (r, &t) in cache.output().rows().into_iter().zip(&d.targets) {
            up.extend(softmax_xent(r.as_slice().unwrap(), t).unwrap().1);
        }
        let g = backward(&p, &cache, &up).unwrap();
        sgd_step(&mut p, &g, 0.01 / d.len() as f64);
        let now = mean_loss(&p);
        assert!(now <= prev + 1e-15, "{now} > {prev}");
        prev = now;
    }
}

#[test]
fn checkpoint_layout_and_errors() {
    let p = ModelParams::new(vec![Layer {
        weights: array![[1.0, 2.0]],
        bias: array![3.0],
        activation: Activation::Sigmoid,
    }])
    .unwrap();
    let bytes = p.to_bytes();
    assert_eq!(&bytes[..4], b"DBFG");
    assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
    assert_eq!(&bytes[6..8], &1u16.to_le_bytes());
    assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
    assert_eq!(bytes[16], 2);
    assert_eq!(&bytes[17..25], &1.0f64.to_le_bytes());
    assert_eq!(bytes.len(), 17 + 3 * 8);
    assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), p);

    assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(ModelParams::from_bytes(&bad).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(ModelParams::from_bytes(&extra).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_byte_exact(seed in any::<u64>(), hidden in 1usize..6, input in 1usize..6) {
            let arch = Architecture::mlp(input, &[hidden], 2, Activation::Sigmoid);
            let p = random_net(&arch, seed);
            let bytes = p.to_bytes();
            let back = ModelParams::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }

        #[test]
        fn probabilities_form_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
