use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mmvae_core::data::{augment, generate_synthetic, SyntheticParams};
use mmvae_core::harness::{RunConfig, RunData, Trainer};
use mmvae_core::measures::{kl_diag, MeasureEvaluator};
use mmvae_core::nn::{Matrix, RngState};
use mmvae_core::{DiagonalGaussian, MultimodalVae, ScheduleKind};

fn elbo(c: &mut Criterion) {
    let data = generate_synthetic(0, 256, &SyntheticParams::default()).unwrap();
    let mut rng = RngState::new(1);
    let mut model = MultimodalVae::standard(&mut rng).unwrap();
    let pairs = augment(&data, 0, &mut rng);
    let (inputs, targets) = pairs.slice(0..64);
    let mut noise = Matrix::zeros(64, model.latent_dim());
    rng.fill_standard_normal(noise.as_mut_slice());
    c.bench_function("elbo_backward_batch64", |b| {
        b.iter(|| model.elbo_backward(black_box(&inputs), &targets, 0.5, &noise).unwrap())
    });
    c.bench_function("reconstruct_mean_batch64", |b| {
        b.iter(|| model.reconstruct_mean_batch(black_box(&inputs)).unwrap())
    });
}

fn kl(c: &mut Criterion) {
    let mut rng = RngState::new(2);
    let gaussian = |rng: &mut RngState| {
        let mean = rng.gaussian_sample(28);
        let var = (0..28).map(|_| rng.uniform(0.1, 3.0)).collect();
        DiagonalGaussian::new(mean, var).unwrap()
    };
    let p = gaussian(&mut rng);
    let q = gaussian(&mut rng);
    let all: Vec<usize> = (0..28).collect();
    c.bench_function("kl_diag_28", |b| b.iter(|| kl_diag(black_box(&p), black_box(&q), &all).unwrap()));
}

fn measures(c: &mut Criterion) {
    let config = RunConfig::default().with_overrides(&["n_samples=1024"]).unwrap();
    let data = RunData::prepare(&config).unwrap();
    let model = MultimodalVae::standard(&mut RngState::new(3)).unwrap();
    c.bench_function("measure_report_1024", |b| {
        b.iter(|| MeasureEvaluator::new(&model, &data.eval, None).unwrap().report(0).unwrap())
    });
}

fn epoch(c: &mut Criterion) {
    let config = RunConfig::default();
    let data = RunData::prepare(&config).unwrap();
    let trainer = Trainer::new(&config, ScheduleKind::Constant1, 0).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_2000_samples", |b| {
        b.iter_batched(|| trainer.clone(), |mut t| t.train_epoch(&data.train).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, elbo, kl, measures, epoch);
criterion_main!(benches);
