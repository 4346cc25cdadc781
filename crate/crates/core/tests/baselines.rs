use dvrl_core::baselines::{
    loo_values, random_values, shapley_exact, shapley_tmc, MarginalEvaluator, SubsetScorer, TmcConfig,
};
use dvrl_core::data::{Dataset, SplitRole};
use dvrl_core::experiments::synthetic::gaussian_blobs;
use dvrl_core::matrix::DenseMatrix;
use dvrl_core::predictor::{Metric, PredictorKind, PredictorModel, PredictorSpec};
use dvrl_core::nn::OptimizerKind;

fn quick_spec() -> PredictorSpec {
    PredictorSpec {
        kind: PredictorKind::Logistic,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.5,
        batch_size: 64,
        iterations: 100,
    }
}

fn instance(n: usize, seed: u64, metric: Metric) -> (Dataset, MarginalEvaluator) {
    let train = gaussian_blobs(n, 2, 2, 1.5, seed, SplitRole::Train).unwrap();
    let holdout = gaussian_blobs(200, 2, 2, 1.5, seed + 100, SplitRole::Validation).unwrap();
    let eval = MarginalEvaluator::new(quick_spec(), metric, holdout, 7);
    (train, eval)
}

fn loo(data: &Dataset, eval: &MarginalEvaluator) -> Vec<f64> {
    loo_values(data, eval).unwrap().into_iter().map(Result::unwrap).collect()
}

#[test]
fn loo_equals_scripted_retrain_differences() {
    let (train, eval) = instance(5, 1, Metric::LogLoss);
    let values = loo(&train, &eval);
    // independent script: same spec, same seeds, explicit subsets
    let fit_score = |rows: &[usize]| {
        let subset = train.subset(rows);
        let mut m = PredictorModel::for_dataset(quick_spec(), &subset, 7).unwrap();
        m.fit(&subset, 7).unwrap();
        -m.evaluate(&eval.holdout, Metric::LogLoss).unwrap()
    };
    let full = fit_score(&[0, 1, 2, 3, 4]);
    for i in 0..5 {
        let rest: Vec<usize> = (0..5).filter(|&j| j != i).collect();
        assert_eq!(values[i].to_bits(), (full - fit_score(&rest)).to_bits(), "row {i}");
    }
}

#[test]
fn loo_underestimates_a_duplicated_influential_sample() {
    // a lone class-1 example carries all the information about its class
    let x = DenseMatrix::from_rows(&[[-2.0, 0.0], [-1.5, 0.5], [-2.5, -0.5], [-1.0, 0.2], [2.0, 0.0]]).unwrap();
    let single = Dataset::from_classes(x.clone(), &[0, 0, 0, 0, 1], 2, SplitRole::Train).unwrap();
    let hx = DenseMatrix::from_rows(&[[-2.0, 0.1], [2.0, -0.1], [1.8, 0.3], [-1.7, 0.0]]).unwrap();
    let holdout = Dataset::from_classes(hx, &[0, 1, 1, 0], 2, SplitRole::Validation).unwrap();
    let eval = MarginalEvaluator::new(quick_spec(), Metric::LogLoss, holdout, 3);
    let alone = loo(&single, &eval)[4];

    let doubled_x = x.vconcat(&DenseMatrix::from_rows(&[[2.0, 0.0]]).unwrap()).unwrap();
    let doubled = Dataset::from_classes(doubled_x, &[0, 0, 0, 0, 1, 1], 2, SplitRole::Train).unwrap();
    let dup = loo(&doubled, &eval);
    let (a, b) = (dup[4], dup[5]);
    assert!(alone > 0.1, "singleton LOO value {alone}");
    assert!(a.abs() < alone / 2.0 && b.abs() < alone / 2.0, "duplicates {a} {b} vs {alone}");
}

#[test]
fn exact_shapley_is_efficient() {
    let (train, eval) = instance(8, 2, Metric::Accuracy);
    let values = shapley_exact(&train, &eval).unwrap();
    let scorer = eval.bind(&train);
    let full = scorer.score(&(0..8).collect::<Vec<_>>()).unwrap();
    let empty = scorer.score(&[]).unwrap();
    assert!((values.iter().sum::<f64>() - (full - empty)).abs() < 1e-9);
}

fn max_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tmc_converges_to_exact_shapley() {
    let (train, eval) = instance(8, 2, Metric::Accuracy);
    let exact = shapley_exact(&train, &eval).unwrap();
    let tmc = |permutations, seed| {
        let cfg = TmcConfig {
            permutations,
            truncation_tolerance: Some(0.0),
            seed,
        };
        shapley_tmc(&train, &eval, &cfg).unwrap()
    };
    let e = max_error(&tmc(5000, 1), &exact);
    assert!(e < 0.01, "max error {e}");
    let mean_error = |perms| (0..6).map(|s| max_error(&tmc(perms, 10 + s), &exact)).sum::<f64>() / 6.0;
    let (coarse, fine) = (mean_error(20), mean_error(500));
    assert!(fine < coarse, "error at 500 permutations {fine} vs 20 permutations {coarse}");
}

#[test]
fn tmc_is_efficient_per_permutation_without_truncation() {
    let (train, eval) = instance(6, 4, Metric::LogLoss);
    let cfg = TmcConfig {
        permutations: 3,
        truncation_tolerance: Some(0.0),
        seed: 0,
    };
    let v = shapley_tmc(&train, &eval, &cfg).unwrap();
    let scorer = eval.bind(&train);
    let gap = scorer.score(&(0..6).collect::<Vec<_>>()).unwrap() - scorer.score(&[]).unwrap();
    assert!((v.iter().sum::<f64>() - gap).abs() < 1e-9);
}

#[test]
fn exact_shapley_refuses_large_sets() {
    let (train, eval) = instance(13, 5, Metric::Accuracy);
    let err = shapley_exact(&train, &eval).unwrap_err().to_string();
    assert!(err.contains("truncated Monte Carlo"), "{err}");
}

#[test]
fn random_baseline_mean_within_clt_bound() {
    let v = random_values(10_000, 42).unwrap();
    let mean = v.iter().sum::<f64>() / 1e4;
    assert!((mean - 0.5).abs() < 0.015);
}
