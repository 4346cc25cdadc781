use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use dvrl_bench::noisy_blobs;
use dvrl_core::dvrl::{reinforce_step, BaselineTracker};
use dvrl_core::estimator::sample_selection;
use dvrl_core::nn::{MlpParams, OutputActivation};
use dvrl_core::rng::seeded;
use dvrl_core::{train_dvrl, DenseMatrix, DvrlConfig, EstimatorSpec, PredictorModel, PredictorSpec, ValueEstimator};

fn mlp(c: &mut Criterion) {
    let mut rng = seeded(1);
    let params = MlpParams::glorot(&[12, 100, 100, 1], OutputActivation::Sigmoid, &mut rng).unwrap();
    let x = DenseMatrix::filled(256, 12, 0.3);
    c.bench_function("mlp_forward_256x12_h100x2", |b| b.iter(|| params.forward(&x).unwrap()));
    let upstream = DenseMatrix::filled(256, 1, 1.0);
    c.bench_function("mlp_forward_backward_256x12_h100x2", |b| {
        b.iter(|| params.backward(&x, &upstream).unwrap())
    });
}

fn estimator(c: &mut Criterion) {
    let (train, validation) = noisy_blobs(2000, 10, 3);
    let est = ValueEstimator::for_dataset(&EstimatorSpec::default(), &train, 5).unwrap();
    let values = est.estimate_values(&train).unwrap();
    let selection = sample_selection(&values, 9).unwrap();
    c.bench_function("estimator_values_2000", |b| b.iter(|| est.estimate_values(&train).unwrap()));
    c.bench_function("estimator_log_prob_gradient_2000", |b| {
        b.iter(|| est.log_prob_gradient(&train, &selection).unwrap())
    });
    let predictor = PredictorModel::for_dataset(PredictorSpec::logistic(), &train, 2).unwrap();
    let tracker = BaselineTracker::new(20).unwrap();
    c.bench_function("reinforce_step_2000", |b| {
        b.iter_batched(
            || est.clone(),
            |mut e| reinforce_step(&mut e, &train, &selection, &predictor, &validation, &tracker).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn outer_iterations(c: &mut Criterion) {
    let (train, validation) = noisy_blobs(1000, 2, 11);
    let config = DvrlConfig {
        outer_iterations: 10,
        inner_iterations: 50,
        predictor_batch: 64,
        valuation_batch: 256,
        pretrain_iterations: 200,
        ..DvrlConfig::default()
    };
    let mut group = c.benchmark_group("dvrl");
    group.sample_size(10);
    group.bench_function("ten_outer_iterations_n1000", |b| {
        b.iter(|| train_dvrl(&train, &validation, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mlp, estimator, outer_iterations);
criterion_main!(benches);
