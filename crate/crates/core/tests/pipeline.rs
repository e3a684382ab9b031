use std::sync::OnceLock;

use debias_core::nn::{Activation, Architecture, ModelParams};
use debias_core::pipeline::{
    build_partitions, derive_seed, evaluate, evaluate_leftover, extrapolate_ra_labels, extrapolate_stage,
    scale_histogram, select_manual, subgroup_counts, DlsConfig, ExtrapolationOutcome, PartitionSpec, Partitions,
    PipelineConfig, Scale,
};
use debias_core::stats::binomial_ci;
use debias_core::synthetic::{factor_reads, GeneratorConfig, ImageSample, Provenance, RaLabel, Subgroup};
use debias_core::traversal::Strategy;
use debias_core::Error;
use proptest::prelude::*;

fn config() -> PipelineConfig {
    PipelineConfig::default()
}

fn raw_partitions() -> &'static Partitions {
    static P: OnceLock<Partitions> = OnceLock::new();
    P.get_or_init(|| {
        let cfg = config();
        build_partitions(&cfg.partition_spec(), &cfg.generator).unwrap()
    })
}

fn extrapolated() -> &'static (Partitions, ExtrapolationOutcome) {
    static P: OnceLock<(Partitions, ExtrapolationOutcome)> = OnceLock::new();
    P.get_or_init(|| {
        let mut p = raw_partitions().clone();
        let ex = extrapolate_stage(&mut p, &config()).unwrap();
        (p, ex)
    })
}

#[test]
fn scaled_counts() {
    let p = raw_partitions();
    assert_eq!(subgroup_counts(&p.train_baseline), [266, 533, 266, 0]);
    assert_eq!(subgroup_counts(&p.test), [100; 4]);
    assert_eq!(p.leftover_rd.len(), 314);
    assert_eq!(subgroup_counts(&p.leftover_rd), [0, 0, 0, 314]);
    let spec = config().partition_spec();
    assert_eq!(spec.manual_count(), 78);
    assert_eq!(spec.synthetic_rd_count(), 533);
}

#[test]
fn debiased_pool_is_balanced() {
    let p = raw_partitions();
    let base = subgroup_counts(p.debias_base(false));
    let synthetic = config().partition_spec().synthetic_rd_count();
    let total = [base[0], base[1], base[2], base[3] + synthetic];
    assert_eq!(total, [2 * 266, 533, 2 * 266, 533]);
    // Duplication, not reweighting: every healthy id appears exactly twice.
    let healthy = p.train_baseline.iter().filter(|s| !s.referable).count();
    let pool = p.debias_base(false);
    let dup = pool.iter().filter(|s| !s.referable).count();
    assert_eq!(dup, 2 * healthy);
}

#[test]
fn darker_baseline_training_has_only_healthy_levels() {
    let p = raw_partitions();
    for s in p.train_baseline.iter().filter(|s| s.group().is_darker()) {
        assert!(s.dr_level.unwrap() <= 1, "{} has level {:?}", s.id, s.dr_level);
    }
}

#[test]
fn pools_are_disjoint_and_duplicates_are_caught() {
    let p = raw_partitions();
    p.check_disjoint().unwrap();
    let mut bad = p.clone();
    bad.leftover_rd[0].id = bad.test[0].id.clone();
    assert!(matches!(bad.check_disjoint(), Err(Error::Integrity(_))));
}

#[test]
fn validation_split_is_stratified() {
    let p = raw_partitions();
    let val = subgroup_counts(p.val());
    assert_eq!(val, [53, 106, 53, 0]);
}

#[test]
fn test_and_leftover_keep_manual_labels() {
    let (p, _) = extrapolated();
    assert!(p
        .test
        .iter()
        .chain(&p.leftover_rd)
        .all(|s| s.ra_provenance == Provenance::Manual));
    let manual = p
        .train_baseline
        .iter()
        .filter(|s| s.ra_provenance == Provenance::Manual)
        .count();
    assert_eq!(manual, 78);
    let extrapolated = p
        .train_baseline
        .iter()
        .filter(|s| s.ra_provenance == Provenance::Extrapolated)
        .count();
    assert_eq!(extrapolated, p.train_baseline.len() - 78);
}

#[test]
fn extrapolation_accuracy_threshold() {
    let (_, ex) = extrapolated();
    // 39 per group, 60% floored per group.
    assert_eq!((ex.n_train, ex.n_val), (46, 32));
    assert!(
        ex.validation_accuracy >= 0.85,
        "validation accuracy {}",
        ex.validation_accuracy
    );
}

#[test]
fn extrapolated_labels_agree_with_factors() {
    let (p, _) = extrapolated();
    let thresholds = GeneratorConfig::default().thresholds;
    let (mut agree, mut n) = (0, 0);
    for s in p
        .train_baseline
        .iter()
        .filter(|s| s.ra_provenance == Provenance::Extrapolated)
    {
        let pig = s.oracle_factors().unwrap().pigmentation;
        let truth = if pig < thresholds.lo {
            RaLabel::Lighter
        } else if pig > thresholds.hi {
            RaLabel::Darker
        } else {
            continue;
        };
        n += 1;
        agree += usize::from(truth == s.ra_label);
    }
    assert!(agree as f64 >= 0.9 * n as f64, "{agree}/{n}");
}

fn manual_split(p: &Partitions) -> Vec<&ImageSample> {
    let idx = select_manual(&p.train_baseline, 78, 11).unwrap();
    idx.iter().map(|&i| &p.train_baseline[i]).collect()
}

#[test]
fn manual_selection_is_balanced_and_seeded() {
    let p = raw_partitions();
    let a = select_manual(&p.train_baseline, 78, 11).unwrap();
    assert_eq!(a, select_manual(&p.train_baseline, 78, 11).unwrap());
    let darker = a.iter().filter(|&&i| p.train_baseline[i].group().is_darker()).count();
    assert_eq!(darker, 39);
    assert!(select_manual(&p.train_baseline, 10_000, 11).is_err());
}

#[test]
fn empty_unlabeled_set_still_reports_accuracy() {
    let p = raw_partitions();
    let cfg = DlsConfig::default();
    let out = extrapolate_ra_labels(&manual_split(p), &mut [], &cfg, &cfg.train, 0.6).unwrap();
    assert_eq!(out.extrapolated, 0);
    assert!(out.validation_accuracy.is_finite());
}

#[test]
fn single_class_manual_set_is_rejected() {
    let p = raw_partitions();
    let lighter: Vec<&ImageSample> = p
        .train_baseline
        .iter()
        .filter(|s| !s.group().is_darker())
        .take(20)
        .collect();
    let cfg = DlsConfig::default();
    let r = extrapolate_ra_labels(&lighter, &mut [], &cfg, &cfg.train, 0.6);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

/// A classifier whose output is constant: class 1 when `positive`.
fn constant_model(dim: usize, positive: bool) -> ModelParams {
    let arch = Architecture::mlp(dim, &[], 2, Activation::Identity);
    let mut m = ModelParams::zeros(&arch).unwrap();
    let b = &mut m.layers_mut()[0].bias;
    b[usize::from(positive)] = 5.0;
    m
}

#[test]
fn leftover_sensitivity() {
    let p = raw_partitions();
    let dim = p.leftover_rd[0].pixels.data.len();
    let m = evaluate_leftover(&constant_model(dim, true), &p.leftover_rd, 0.5).unwrap();
    assert_eq!(m.value, 1.0);
    let m = evaluate_leftover(&constant_model(dim, false), &p.leftover_rd, 0.5).unwrap();
    assert_eq!(m.value, 0.0);

    let half = ModelParams::zeros(&Architecture::mlp(dim, &[], 2, Activation::Identity)).unwrap();
    let m = evaluate_leftover(&half, &p.leftover_rd, 0.5).unwrap();
    assert_eq!(m.value, 1.0);
    let ci = binomial_ci(m.value, m.n).unwrap();
    assert_eq!(m.ci_half_width, ci.half_width);

    assert!(matches!(
        evaluate_leftover(&half, &[], 0.5),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        evaluate_leftover(&half, &p.test, 0.5),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn evaluation_needs_both_groups() {
    let p = raw_partitions();
    let dim = p.test[0].pixels.data.len();
    let lighter: Vec<ImageSample> = p.test.iter().filter(|s| !s.group().is_darker()).cloned().collect();
    let r = evaluate(&constant_model(dim, true), &lighter, "x", 0.5);
    assert!(matches!(r, Err(Error::UndefinedCell(_))));
}

#[test]
fn provenance_wall() {
    // Training and prediction paths never read ground-truth factors.
    let mut p = raw_partitions().clone();
    let cfg = PipelineConfig {
        b_dr_dls: DlsConfig {
            train: debias_core::nn::TrainConfig {
                epochs: 5,
                ..DlsConfig::default().train
            },
            ..DlsConfig::default()
        },
        ..config()
    };
    let before = factor_reads();
    extrapolate_stage(&mut p, &cfg).unwrap();
    let b = debias_core::pipeline::run_baseline(&p, &cfg).unwrap();
    evaluate(&b.model, &p.test, "x", 0.5).unwrap();
    assert_eq!(factor_reads(), before);
    // The audit itself counts.
    p.test[0].oracle_factors();
    assert_eq!(factor_reads(), before + 1);
}

#[test]
fn strategy_names() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert!(matches!(
        "rd_optimized".parse::<Strategy>(),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn derived_seeds_differ_by_purpose_and_master() {
    assert_eq!(derive_seed(0, "train"), derive_seed(0, "train"));
    assert_ne!(derive_seed(0, "train"), derive_seed(0, "test"));
    assert_ne!(derive_seed(0, "train"), derive_seed(1, "train"));
}

#[test]
fn invalid_specs_are_config_errors() {
    let spec = PartitionSpec {
        oversample_factor: 0,
        ..PartitionSpec::default()
    };
    assert!(matches!(spec.validate(), Err(Error::Config(_))));
    assert!(matches!("0/20".parse::<Scale>(), Err(Error::Config(_))));
    let cfg = PipelineConfig {
        manual_train_fraction: 1.0,
        ..config()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn histogram_scaling_examples() {
    let s = Scale::new(1, 20).unwrap();
    // Floors are 415, 67, 50; the one remaining unit goes to the largest bin.
    assert_eq!(scale_histogram(&[0, 0, 8312, 1346, 1002], 533, s), [0, 0, 416, 67, 50]);
    assert_eq!(scale_histogram(&[4828, 502, 0, 0, 0], 266, s), [241, 25, 0, 0, 0]);
    assert_eq!(scale_histogram(&[3, 3], 0, s), [0, 0]);
}

proptest! {
    #[test]
    fn scaled_histograms_hit_their_total(bins in prop::array::uniform5(0usize..20_000), den in 1u64..50) {
        let s = Scale::new(1, den).unwrap();
        let total = s.floor(bins.iter().sum());
        let out = scale_histogram(&bins, total, s);
        prop_assert_eq!(out.iter().sum::<usize>(), total);
        for (o, b) in out.iter().zip(&bins) {
            if *b == 0 {
                prop_assert_eq!(*o, 0);
            }
        }
    }

    #[test]
    fn scale_parsing_round_trips(num in 1u64..1000, den in 1u64..1000) {
        let s = Scale::new(num, den).unwrap();
        prop_assert_eq!(s.to_string().parse::<Scale>().unwrap(), s);
    }
}

#[test]
fn subgroup_display_round_trips() {
    for s in Subgroup::ALL {
        assert_eq!(s.to_string().parse::<Subgroup>().unwrap(), s);
    }
}
