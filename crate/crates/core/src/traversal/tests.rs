use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::generative::{GenerativeModel, LatentPair, PseudoDr};
use crate::nn::{argmax, predict_proba, Layer};

fn random_clf(dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init_uniform(&Architecture::mlp(dim, &[8], 2, Activation::Identity), 1.5, &mut rng).unwrap()
}

fn linear(weights: Vec<f64>, bias: Vec<f64>, inputs: usize) -> ModelParams {
    let outputs = bias.len();
    ModelParams::new(vec![Layer {
        weights: Array2::from_shape_vec((outputs, inputs), weights).unwrap(),
        bias: Array1::from(bias),
        activation: Activation::Identity,
    }])
    .unwrap()
}

fn loss_at(clf: &ModelParams, w: &[f64]) -> f64 {
    let y = predict_proba(clf, w).unwrap()[1];
    (y - 1.0) * (y - 1.0)
}

#[test]
fn zero_step_is_a_no_op() {
    let clf = random_clf(5, 1);
    let w0 = vec![0.3, -0.2, 0.1, 0.9, -1.0];
    let cfg = TraversalConfig {
        eta: 0.0,
        max_steps: 20,
        target_prob: 0.999_999,
        ..TraversalConfig::default()
    };
    let r = traverse(&w0, &clf, &cfg).unwrap();
    assert_eq!(r.w_final, w0);
    assert_eq!(r.loss_trace.len(), r.steps_taken + 1);
    assert!(r.loss_trace.iter().all(|&l| l == r.loss_trace[0]));
}

#[test]
fn certain_target_is_a_fixed_point() {
    let clf = linear(vec![0.0; 4], vec![-1000.0, 1000.0], 2);
    let w0 = vec![0.4, -0.7];
    let (y, loss, grad) = objective(&clf, &w0, 1).unwrap();
    assert_eq!((y, loss), (1.0, 0.0));
    assert!(grad.iter().all(|&g| g == 0.0));
    let r = traverse(&w0, &clf, &TraversalConfig::default()).unwrap();
    assert_eq!(r.w_final, w0);
    assert_eq!(r.steps_taken, 0);
    assert!(r.converged);
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut probes = 0;
    for seed in 0..20 {
        let clf = random_clf(6, seed);
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (_, _, grad) = objective(&clf, &w, 1).unwrap();
        for i in 0..6 {
            let h = 1e-5;
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (loss_at(&clf, &plus) - loss_at(&clf, &minus)) / (2.0 * h);
            let err = (fd - grad[i]).abs();
            assert!(
                err < 1e-5 * fd.abs().max(grad[i].abs()) || err < 1e-9,
                "{fd} vs {}",
                grad[i]
            );
            probes += 1;
        }
    }
    assert!(probes >= 100);
}

#[test]
fn single_step_matches_finite_difference_update() {
    let clf = random_clf(4, 11);
    let w0 = vec![0.2, 0.1, -0.4, 0.6];
    let eta = 0.05;
    let cfg = TraversalConfig {
        eta,
        max_steps: 1,
        target_prob: 1.0,
        ..TraversalConfig::default()
    };
    let r = traverse(&w0, &clf, &cfg).unwrap();
    for i in 0..4 {
        let h = 1e-6;
        let mut plus = w0.clone();
        let mut minus = w0.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (loss_at(&clf, &plus) - loss_at(&clf, &minus)) / (2.0 * h);
        let expect = w0[i] - eta * fd;
        assert!((r.w_final[i] - expect).abs() <= 1e-6 * expect.abs().max(1e-3));
    }
}

#[test]
fn small_steps_descend_on_smooth_classifiers() {
    // ReLU kinks can make a fixed step zig-zag; a sigmoid hidden layer keeps the objective smooth.
    let arch = Architecture {
        input_dim: 8,
        layers: vec![(8, Activation::Sigmoid), (2, Activation::Identity)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut monotone = 0;
    let n = 100;
    for k in 0..n {
        let clf = ModelParams::init_uniform(&arch, 3.0, &mut ChaCha8Rng::seed_from_u64(100 + k)).unwrap();
        let w0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = traverse(&w0, &clf, &TraversalConfig::default()).unwrap();
        if r.loss_increases() == 0 {
            monotone += 1;
        }
        if r.converged {
            assert!(r.final_prob >= 0.9);
        }
        assert_eq!(r.loss_trace.len(), r.steps_taken + 1);
    }
    assert!(monotone as f64 >= 0.95 * n as f64, "{monotone}/{n}");
}

#[test]
fn overflow_reports_the_step() {
    let clf = linear(vec![1e308, 1e308, -1e308, -1e308], vec![0.0, 0.0], 2);
    let r = traverse(&[1e10, 1e10], &clf, &TraversalConfig::default());
    assert!(matches!(r, Err(Error::Numeric { step: Some(0), .. })), "{r:?}");
}

#[test]
fn invalid_traversal_inputs() {
    let clf = random_clf(3, 0);
    assert!(traverse(&[0.0, 0.0], &clf, &TraversalConfig::default()).is_err());
    assert!(traverse(&[f64::NAN, 0.0, 0.0], &clf, &TraversalConfig::default()).is_err());
    let bad = TraversalConfig {
        target_prob: 0.0,
        ..TraversalConfig::default()
    };
    assert!(traverse(&[0.0; 3], &clf, &bad).is_err());
}

fn labelled_pairs(n: usize, seed: u64) -> Vec<LatentPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut p = LatentPair::new(w.clone(), vec![0.0; 4]);
            p.pseudo_ra = Some(if w[0] + 0.5 * w[1] > 0.0 {
                Group::Darker
            } else {
                Group::Lighter
            });
            p.pseudo_dr = Some(if w[2] > 0.3 {
                PseudoDr::Referable
            } else {
                PseudoDr::Healthy
            });
            p
        })
        .collect()
}

#[test]
fn latent_classifier_fits_its_subset() {
    let pairs = labelled_pairs(600, 1);
    let clf = train_latent_classifier(&pairs, LatentTarget::Ra, &LatentClassifierConfig::default()).unwrap();
    let data = latent_training_set(&pairs, LatentTarget::Ra).unwrap();
    assert!(pairs.iter().filter(|p| p.pseudo_dr == Some(PseudoDr::Healthy)).count() == data.len());
    let correct = data
        .inputs
        .rows()
        .into_iter()
        .zip(&data.targets)
        .filter(|(x, &t)| argmax(&predict_proba(&clf, x.as_slice().unwrap()).unwrap()) == t)
        .count();
    assert!(correct as f64 >= 0.8 * data.len() as f64, "{correct}/{}", data.len());
}

#[test]
fn swapped_labels_flip_decisions() {
    let pairs = labelled_pairs(400, 2);
    let swapped: Vec<LatentPair> = pairs
        .iter()
        .cloned()
        .map(|mut p| {
            p.pseudo_ra = p.pseudo_ra.map(|g| {
                if g == Group::Darker {
                    Group::Lighter
                } else {
                    Group::Darker
                }
            });
            p
        })
        .collect();
    let cfg = LatentClassifierConfig::default();
    let a = train_latent_classifier(&pairs, LatentTarget::Ra, &cfg).unwrap();
    let b = train_latent_classifier(&swapped, LatentTarget::Ra, &cfg).unwrap();
    // Same seed, mirrored output rows: the swapped run is the mirror of the original run
    // when started from the mirrored initialization, so compare against that.
    let mirrored = crate::nn::train_classifier_from(
        ModelParams::init_uniform(
            &a.architecture(),
            cfg.train.weight_init_scale,
            &mut cfg.train.init_rng(),
        )
        .unwrap()
        .mirrored_output()
        .unwrap(),
        &latent_training_set(&swapped, LatentTarget::Ra).unwrap(),
        &cfg.train,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut decisive, mut flipped) = (0, 0);
    for _ in 0..1000 {
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pa = predict_proba(&a, &w).unwrap();
        let pm = predict_proba(&mirrored, &w).unwrap();
        assert!((pa[1] - (1.0 - pm[1])).abs() < 1e-9);
        if (pa[1] - 0.5).abs() > 0.05 {
            decisive += 1;
            assert_ne!(argmax(&pa), argmax(&pm));
            let pb = predict_proba(&b, &w).unwrap();
            if argmax(&pa) != argmax(&pb) {
                flipped += 1;
            }
        }
    }
    assert!(decisive > 500);
    // Independently initialised, so only nearly every decisive probe flips.
    assert!(flipped as f64 >= 0.95 * decisive as f64, "{flipped}/{decisive}");
}

#[test]
fn degenerate_latent_sets_are_rejected() {
    assert!(train_latent_classifier(&[], LatentTarget::Ra, &LatentClassifierConfig::default()).is_err());
    let mut pairs = labelled_pairs(50, 3);
    for p in &mut pairs {
        p.pseudo_ra = Some(Group::Lighter);
    }
    assert!(matches!(
        train_latent_classifier(&pairs, LatentTarget::Ra, &LatentClassifierConfig::default()),
        Err(Error::InvalidArgument(_))
    ));
    let unlabelled = vec![LatentPair::new(vec![0.0; 4], vec![0.0; 4])];
    assert!(latent_training_set(&unlabelled, LatentTarget::Dr).is_err());
}

/// Decoder copies w into the image; classifiers read single pixels.
fn toy_models() -> (GenerativeModel, ModelParams, ModelParams) {
    let eye = |n: usize| {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        w
    };
    let enc = linear(eye(4), vec![0.0; 4], 4);
    let dec = ModelParams::new(vec![Layer {
        weights: Array2::from_shape_vec((4, 4), eye(4)).unwrap(),
        bias: Array1::zeros(4),
        activation: Activation::Sigmoid,
    }])
    .unwrap();
    let generative = GenerativeModel::new(enc, dec, vec![0.0; 4], vec![1.0; 4]).unwrap();
    // P(referable) rises with pixel 2, P(darker) with pixel 0.
    let b_dr = linear(vec![0.0, 0.0, -10.0, 0.0, 0.0, 0.0, 10.0, 0.0], vec![5.0, -5.0], 4);
    let ra = linear(vec![-10.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0], vec![5.0, -5.0], 4);
    (generative, b_dr, ra)
}

#[test]
fn synthesis_accepts_filtered_outputs() {
    let (generative, b_dr, ra) = toy_models();
    let mut pairs = labelled_pairs(300, 4);
    for p in &mut pairs {
        p.w = p.w.iter().map(|v| 3.0 * v).collect();
        p.image = generative.decode(&p.w).unwrap();
    }
    crate::generative::pseudo_label_pairs(&mut pairs, &b_dr, &ra).unwrap();
    let l_ra = train_latent_classifier(&pairs, LatentTarget::Ra, &LatentClassifierConfig::default()).unwrap();
    let models = SynthesisModels {
        generative: &generative,
        b_dr_dls: &b_dr,
        ra_dls: &ra,
        latent_clf: &l_ra,
        image_size: 2,
    };
    let cfg = TraversalConfig {
        eta: 0.5,
        ..TraversalConfig::default()
    };
    let empty = synthesize_rd(Strategy::RaOptimized, &pairs, &models, 0, &cfg, "s").unwrap();
    assert!(empty.samples.is_empty());

    let out = synthesize_rd(Strategy::RaOptimized, &pairs, &models, 10, &cfg, "s").unwrap();
    assert_eq!(out.samples.len(), 10);
    for s in &out.samples {
        assert_eq!(s.subgroup, crate::synthetic::Subgroup::RD);
        assert!(predict_proba(&b_dr, &s.pixels.data).unwrap()[1] > 0.5);
        assert!(predict_proba(&ra, &s.pixels.data).unwrap()[1] > 0.5);
        assert!(s.oracle_factors().is_none());
    }
    for (s, t) in out.samples.iter().zip(&out.traversals) {
        assert_eq!(s.pixels.data, generative.decode(&t.w_final).unwrap());
    }
    assert_eq!(out.report.accepted, 10);
    assert!(out.report.acceptance_rate > 0.0 && out.report.acceptance_rate <= 1.0);

    let again = synthesize_rd(Strategy::RaOptimized, &pairs, &models, 10, &cfg, "s").unwrap();
    assert_eq!(again.samples, out.samples);

    let too_many = synthesize_rd(Strategy::RaOptimized, &pairs, &models, 10_000, &cfg, "s");
    match too_many {
        Err(Error::InsufficientStarters {
            accepted,
            required,
            acceptance_rate,
            ..
        }) => {
            assert_eq!(required, 10_000);
            assert!(accepted < required);
            assert!(acceptance_rate > 0.0);
        }
        other => panic!("expected insufficient starters, got {other:?}"),
    }
}
