use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diffrec_core::corpus::{Corpus, CorpusConfig};
use diffrec_core::influence::InfluenceConfig;
use diffrec_core::pipeline::fit_influence;
use diffrec_core::synthetic::{planted_preference, PlantedConfig};
use diffrec_core::training::{
    build_impressions, Dataset, Impression, ModelConfig, ModelParams, NegativeCount, Portion, Recommender,
};

fn batch(c: &mut Criterion) {
    let raw = planted_preference(&PlantedConfig::default(), 1).unwrap();
    let (corpus, _) = Corpus::assemble(
        raw.graph,
        raw.cascades,
        raw.news,
        CorpusConfig {
            n_max: 6,
            d_max: 24,
            ..CorpusConfig::default()
        },
    )
    .unwrap();
    let split = corpus.split().unwrap();
    let influence = fit_influence(
        &corpus,
        &split,
        &InfluenceConfig {
            dim: 16,
            epochs: 2,
            ..InfluenceConfig::default()
        },
        1,
    )
    .unwrap()
    .model;
    let model = ModelConfig {
        fused: 32,
        filters: 16,
        lstm_hidden: 16,
        view_size: 10,
        ..ModelConfig::default()
    };
    let data = Dataset::new(&corpus, &raw.words, &influence, model.view_size).unwrap();
    let dims = model.news_dims(raw.words.dim(), influence.dim(), corpus.config.d_max);
    let params = ModelParams::random(&dims, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let recommender = Recommender::new(&params, &data, &model);
    let train = build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), 3).impressions;
    let batch: Vec<&Impression> = train.iter().take(16).collect();

    c.bench_function("build_train_impressions", |b| {
        b.iter(|| build_impressions(&data, &split, Portion::Train, NegativeCount::Exactly(4), black_box(3)))
    });
    c.bench_function("batch_forward_16", |b| {
        b.iter(|| recommender.run_batch(black_box(&batch), false).unwrap())
    });
    c.bench_function("batch_forward_backward_16", |b| {
        b.iter(|| recommender.run_batch(black_box(&batch), true).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = batch
}
criterion_main!(benches);
