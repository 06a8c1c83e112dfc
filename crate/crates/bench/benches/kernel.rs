use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kcounter::tune::{loo_cv, TuneConfig};
use kcounter::{Bandwidth, FeatureVector, KernelModel, Label, LabeledExample};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn examples(n: usize, dim: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let y = rng.gen_range(0..200u64);
            let counts = (0..dim)
                .map(|k| (y as f64 * (k + 1) as f64 / dim as f64 + rng.gen_range(0.0..10.0)) as u32)
                .collect();
            LabeledExample::new(format!("img{i}"), FeatureVector::new(counts), Label::count(y))
        })
        .collect()
}

fn prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    for n in [100usize, 1000] {
        let model = KernelModel::new(examples(n, 5, 1), Bandwidth::global(0.1)).unwrap();
        let test = FeatureVector::new(vec![40, 80, 120, 160, 200]);
        // warm the smoothing cache so only the prediction is timed
        model.predict(&test).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &test, |b, t| {
            b.iter(|| model.predict(t).unwrap())
        });
    }
    group.finish();
}

fn cross_validation(c: &mut Criterion) {
    let mut group = c.benchmark_group("loo_cv");
    group.sample_size(10);
    for n in [200usize, 1000] {
        let data = examples(n, 5, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| loo_cv(d, &TuneConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, prediction, cross_validation);
criterion_main!(benches);
