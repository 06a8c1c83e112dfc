use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kcounter::imgcore::label_components;
use kcounter::{
    BinaryImage, Connectivity, FeatureExtractor, RgbImage, ThresholdSet, ThresholdVector,
};
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

fn random_mask(side: usize, density: f64, seed: u64) -> BinaryImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let mask = (0..side * side).map(|_| rng.gen_bool(density)).collect();
    BinaryImage::new(side, side, mask).unwrap()
}

fn labeling(c: &mut Criterion) {
    let mut group = c.benchmark_group("label_components");
    for side in [256usize, 1024] {
        let mask = random_mask(side, 0.45, side as u64);
        group.throughput(Throughput::Elements((side * side) as u64));
        for conn in [Connectivity::Four, Connectivity::Eight] {
            group.bench_with_input(
                BenchmarkId::new(format!("conn{conn}"), side),
                &mask,
                |b, m| b.iter(|| label_components(m, conn)),
            );
        }
    }
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(7);
    let img = RgbImage::from_fn(512, 512, |_, _| {
        let v = rng.gen::<f64>();
        [v, v * 0.9, v * 0.8]
    })
    .unwrap();
    let thresholds = (1..=10)
        .map(|k| {
            let t = k as f64 / 11.0;
            ThresholdVector::new(t, t, t).unwrap()
        })
        .collect();
    let extractor =
        FeatureExtractor::new(ThresholdSet::new(thresholds).unwrap(), Connectivity::Eight);
    c.bench_function("extract_512x512_10_thresholds", |b| b.iter(|| extractor.extract(&img)));
}

criterion_group!(benches, labeling, extraction);
criterion_main!(benches);
