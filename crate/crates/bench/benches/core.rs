use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{rngs::StdRng, Rng, SeedableRng};
use std::hint::black_box;

use stance_bench::Fixture;
use stance_core::corpus::{Split, StanceExample};
use stance_core::eval::{macro_f1, TfidfClassifier, TfidfConfig};
use stance_core::model::ExpertSelection;
use stance_core::trainer::loss_and_gradients;

fn forward(c: &mut Criterion) {
    let fx = Fixture::new();
    let d = fx.dataset("syn_news_a");
    let mask = fx.model.label_space().mask_for(d.name()).unwrap();
    let e = d.split(Split::Test).next().unwrap();
    c.bench_function("forward/one_pair", |b| {
        b.iter(|| fx.model.forward(black_box(&e.context), &e.target, &mask, ExpertSelection::All, None).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let fx = Fixture::new();
    let batch: Vec<&StanceExample> = fx.dataset("syn_news_a").split(Split::Train).take(16).collect();
    c.bench_function("train/loss_and_gradients_16", |b| {
        b.iter(|| loss_and_gradients(&fx.model, black_box(&batch), fx.config.lambda, fx.config.gamma, true).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let labels = ["agree", "disagree", "discuss", "unrelated"];
    let mut rng = StdRng::seed_from_u64(1);
    let preds: Vec<&str> = (0..10_000).map(|_| labels[rng.random_range(0..4)]).collect();
    let golds: Vec<&str> = (0..10_000).map(|_| labels[rng.random_range(0..4)]).collect();
    c.bench_function("eval/macro_f1_10k", |b| b.iter(|| macro_f1(black_box(&preds), &golds, &labels).unwrap()));
}

fn tfidf(c: &mut Criterion) {
    let fx = Fixture::new();
    let d = fx.dataset("syn_news_a");
    let rows: Vec<(&str, &str, &str)> =
        d.split(Split::Train).map(|e| (e.target.as_str(), e.context.as_str(), e.label.as_str())).collect();
    c.bench_function("eval/tfidf_fit", |b| {
        b.iter_batched(
            || rows.clone(),
            |rows| TfidfClassifier::fit(&rows, &d.descriptor.labels, &TfidfConfig::default()).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, forward, training_step, metrics, tfidf);
criterion_main!(benches);
