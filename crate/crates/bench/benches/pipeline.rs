use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sentibar::backtest::{self, Frequency, TradableBars};
use sentibar::features;
use sentibar::gbdt::{self, Samples, TrainParams};
use sentibar::sentiment;
use sentibar_bench::fixture;

fn scoring(c: &mut Criterion) {
    let f = fixture(2);
    let texts: Vec<(String, String)> = f
        .tweets
        .iter()
        .map(|t| (t.tweet.raw.text.clone(), t.tweet.clean_text.clone()))
        .collect();
    c.bench_function("score_all demo registry", |b| {
        b.iter(|| {
            for (raw, clean) in &texts {
                black_box(sentiment::score_all(raw, clean, &f.registry));
            }
        })
    });
}

fn assembly(c: &mut Criterion) {
    let f = fixture(20);
    c.bench_function("assemble 20 days", |b| {
        b.iter(|| features::assemble(&f.tweets, &f.series, &f.registry, &f.feature_config).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let f = fixture(20);
    let m = &f.matrix;
    let samples = Samples::new(m.rows.iter().map(|r| r.as_slice()).collect(), m.labels.clone()).unwrap();
    let params = TrainParams {
        n_estimators: 20,
        ..Default::default()
    };
    let mut group = c.benchmark_group("gbdt");
    group.sample_size(10);
    group.bench_function("train 20 rounds, 20 days", |b| {
        b.iter(|| gbdt::train(&m.columns, &samples, &params, None).unwrap())
    });
    group.finish();
}

fn baseline(c: &mut Criterion) {
    let f = fixture(20);
    let windows: Vec<_> = f.series.bars().iter().map(|b| b.timestamp).collect();
    let tb = TradableBars::new(&windows, &f.series, 100, Frequency::PerBar).unwrap();
    c.bench_function("random baseline 100 models", |b| {
        b.iter(|| backtest::random_baseline(&tb, 100, 4321))
    });
}

criterion_group!(benches, scoring, assembly, training, baseline);
criterion_main!(benches);
