use dvrl_core::baselines::{random_values, MarginalEvaluator};
use dvrl_core::data::{Dataset, SplitRole};
use dvrl_core::dvrl::DvrlConfig;
use dvrl_core::experiments::corruption::{corrupt_features, corrupt_labels};
use dvrl_core::experiments::curves::{discovery_curve, fraction_grid, removal_curve, value_at, RemovalEnd};
use dvrl_core::experiments::protocols::{
    reference_predictor, robust_learning_eval, subsample_validation, validation_size_sweep,
};
use dvrl_core::experiments::synthetic::{gaussian_blobs, two_domain_shift};
use dvrl_core::matrix::DenseMatrix;
use dvrl_core::predictor::{Metric, PredictorSpec};

fn noisy_blobs(n: usize, seed: u64) -> Dataset {
    let clean = gaussian_blobs(n, 2, 2, 3.0, seed, SplitRole::Train).unwrap();
    corrupt_labels(&clean, 0.2, seed + 1).unwrap()
}

fn oracle_values(flags: &[bool]) -> Vec<f64> {
    flags.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect()
}

fn evaluator(seed: u64) -> MarginalEvaluator {
    let test = gaussian_blobs(1000, 2, 2, 3.0, seed + 500, SplitRole::Test).unwrap();
    MarginalEvaluator::new(PredictorSpec::logistic(), Metric::Accuracy, test, seed)
}

#[test]
fn random_discovery_tracks_the_diagonal() {
    let fractions = fraction_grid(0.1, 1.0);
    let seeds = 20;
    let mut mean = vec![0.0; fractions.len()];
    for seed in 0..seeds {
        let data = noisy_blobs(1000, seed);
        let values = random_values(1000, 100 + seed).unwrap();
        let curve = discovery_curve(&values, data.corruption_flags().unwrap(), &fractions).unwrap();
        for (m, p) in mean.iter_mut().zip(&curve) {
            *m += p.value.unwrap() / seeds as f64;
        }
    }
    for (f, m) in fractions.iter().zip(mean) {
        assert!((m - f).abs() < 0.03, "f={f}: mean found {m}");
    }
}

#[test]
fn oracle_discovery_is_the_optimal_reference() {
    let data = noisy_blobs(1000, 3);
    let flags = data.corruption_flags().unwrap();
    let curve = discovery_curve(&oracle_values(flags), flags, &fraction_grid(0.05, 1.0)).unwrap();
    for p in &curve {
        let expected = (p.fraction / 0.2).min(1.0);
        assert!((p.value.unwrap() - expected).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn tie_groups_only_reorder_within_themselves() {
    // n=6 with two tie groups: permuting rows inside a group changes only
    // which flagged rows sit in the shared prefix, never the group totals
    let values = [0.1, 0.1, 0.1, 0.7, 0.7, 0.7];
    let fractions = [0.5, 1.0];
    let mut seen = std::collections::BTreeSet::new();
    for mask in 0u32..64 {
        let flags: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
        if mask == 0 {
            assert!(discovery_curve(&values, &flags, &fractions).is_err());
            continue;
        }
        let total = flags.iter().filter(|&&f| f).count() as f64;
        let low = flags[..3].iter().filter(|&&f| f).count() as f64;
        let curve = discovery_curve(&values, &flags, &fractions).unwrap();
        assert_eq!(curve[0].value, Some(low / total));
        assert_eq!(curve[1].value, Some(1.0));
        seen.insert((low as u8, total as u8));
    }
    // with all values tied, the prefix is exactly the lowest indices
    let tied = [0.5; 6];
    let flags = [false, true, false, false, true, true];
    let curve = discovery_curve(&tied, &flags, &[0.5]).unwrap();
    assert_eq!(curve[0].value, Some(1.0 / 3.0));
    assert!(seen.len() > 1);
}

#[test]
fn feature_noise_has_the_requested_variance() {
    let n = 20_000;
    let data = Dataset::from_classes(DenseMatrix::zeros(n, 2), &vec![0; n], 2, SplitRole::Train).unwrap();
    let noisy = corrupt_features(&data, 0.3, 9).unwrap();
    for j in 0..2 {
        let col: Vec<f64> = (0..n).map(|i| noisy.features().get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // var of the sample variance is 2σ⁴/(n−1)
        let ci = 3.0 * (2.0 * 0.3f64.powi(4) / (n as f64 - 1.0)).sqrt();
        assert!((var - 0.09).abs() < ci, "feature {j}: variance {var}");
    }
    assert_eq!(noisy.labels(), data.labels());
    assert!(corrupt_features(&data.with_role(SplitRole::Validation), 0.3, 9).is_err());
}

#[test]
fn removal_at_zero_is_the_full_data_score() {
    let data = noisy_blobs(300, 4);
    let eval = evaluator(4);
    let full = eval.metric_value(&data, &data).unwrap();
    let values = random_values(300, 1).unwrap();
    for end in [RemovalEnd::Most, RemovalEnd::Least] {
        let curve = removal_curve(&values, &data, end, &[0.0, 0.1], &eval).unwrap();
        assert_eq!(curve[0].value.unwrap().to_bits(), full.to_bits());
    }
}

#[test]
fn removing_oracle_lowest_values_recovers_accuracy() {
    let data = noisy_blobs(500, 5);
    let eval = evaluator(5);
    let values = oracle_values(data.corruption_flags().unwrap());
    let curve = removal_curve(&values, &data, RemovalEnd::Least, &[0.0, 0.2], &eval).unwrap();
    assert!(curve[1].value.unwrap() >= curve[0].value.unwrap(), "{curve:?}");
}

#[test]
fn random_values_make_both_removal_ends_alike() {
    let fractions = [0.1, 0.2, 0.3, 0.4];
    let seeds = 8;
    let mut gap = vec![0.0; fractions.len()];
    for seed in 0..seeds {
        let data = noisy_blobs(400, 20 + seed);
        let eval = evaluator(20 + seed);
        let values = random_values(400, 40 + seed).unwrap();
        let most = removal_curve(&values, &data, RemovalEnd::Most, &fractions, &eval).unwrap();
        let least = removal_curve(&values, &data, RemovalEnd::Least, &fractions, &eval).unwrap();
        for (g, (m, l)) in gap.iter_mut().zip(most.iter().zip(&least)) {
            *g += (m.value.unwrap() - l.value.unwrap()) / seeds as f64;
        }
    }
    for (f, g) in fractions.iter().zip(gap) {
        assert!(g.abs() < 0.02, "f={f}: mean most-least gap {g}");
    }
}

#[test]
fn removal_skips_points_with_nothing_left() {
    let data = noisy_blobs(10, 6);
    let eval = evaluator(6);
    let values = random_values(10, 2).unwrap();
    assert!(removal_curve(&values, &data, RemovalEnd::Most, &[0.95], &eval).is_err());
    let tiny = data.subset(&[0]);
    let curve = removal_curve(&[0.3], &tiny, RemovalEnd::Most, &[0.0, 0.9], &eval).unwrap();
    assert!(curve[0].value.is_some());
    // ⌊0.9 · 1⌋ = 0 rows removed
    assert!(curve[1].value.is_some());
}

fn quick_config(seed: u64) -> DvrlConfig {
    DvrlConfig {
        outer_iterations: 30,
        inner_iterations: 20,
        predictor_batch: 64,
        valuation_batch: 128,
        pretrain_iterations: 300,
        predictor_lr: 0.05,
        estimator_hidden: vec![20],
        seed,
        ..DvrlConfig::default()
    }
}

#[test]
fn robust_report_orders_reference_predictors() {
    let train = noisy_blobs(600, 7);
    let validation = gaussian_blobs(10, 2, 2, 3.0, 8, SplitRole::Validation).unwrap();
    let test = gaussian_blobs(1000, 2, 2, 3.0, 9, SplitRole::Test).unwrap();
    let report = robust_learning_eval(&train, &validation, &test, &quick_config(1)).unwrap();
    assert!(report.clean_only >= report.baseline, "{report:?}");
    assert!(report.validation_only <= report.baseline.min(report.clean_only));
    assert_eq!(report.values.len(), 600);

    let clean = gaussian_blobs(100, 2, 2, 3.0, 7, SplitRole::Train).unwrap();
    assert!(robust_learning_eval(&clean, &validation, &test, &quick_config(1)).is_err());
}

#[test]
fn reference_predictor_is_deterministic() {
    let data = noisy_blobs(200, 10);
    let config = quick_config(3);
    let a = reference_predictor(&data, &config).unwrap();
    let b = reference_predictor(&data, &config).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn sweep_rejects_bad_sizes_before_training() {
    let train = noisy_blobs(100, 11);
    let pool = gaussian_blobs(50, 2, 2, 3.0, 12, SplitRole::Validation).unwrap();
    let grid = fraction_grid(0.1, 0.5);
    for sizes in [vec![10, 0], vec![10, 51]] {
        let err = validation_size_sweep(&train, &pool, &sizes, &grid, &quick_config(0)).unwrap_err();
        assert!(err.to_string().contains("validation_size"), "{err}");
    }
    assert_eq!(subsample_validation(&pool, 50, 3).unwrap(), pool);
    let sub = subsample_validation(&pool, 20, 3).unwrap();
    assert_eq!(sub, subsample_validation(&pool, 20, 3).unwrap());
    assert_eq!(sub.len(), 20);
}

#[test]
fn full_pool_sweep_entry_reproduces_the_standard_run() {
    let train = noisy_blobs(150, 13);
    let pool = gaussian_blobs(60, 2, 2, 3.0, 14, SplitRole::Validation).unwrap();
    let config = quick_config(2);
    let grid = fraction_grid(0.1, 0.5);
    let sweep = validation_size_sweep(&train, &pool, &[60], &grid, &config).unwrap();
    let direct = dvrl_core::train_dvrl(&train, &pool, &config).unwrap();
    assert_eq!(sweep[0].values, direct.values);
    let flags = train.corruption_flags().unwrap();
    assert_eq!(sweep[0].curve, discovery_curve(&direct.values, flags, &grid).unwrap());
    assert!(value_at(&sweep[0].curve, 0.2).is_some());
}

#[test]
fn shift_benchmark_tags_match_geometry() {
    let data = two_domain_shift(2000, 0.1, 3.0, 15, SplitRole::Train).unwrap();
    let tags = data.domains().unwrap();
    let b = tags.iter().filter(|t| *t == "B").count() as f64 / 2000.0;
    assert!((b - 0.1).abs() < 0.03);
    for (i, t) in tags.iter().enumerate() {
        let x0 = data.features().get(i, 0);
        // clusters sit at ±3 with unit noise; crossings are very rare but possible
        if x0.abs() > 4.5 {
            assert_eq!(t == "B", x0 > 0.0);
        }
    }
}
