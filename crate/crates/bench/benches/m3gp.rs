use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use m3gp_core::baselines::{dt_fit, rf_fit, ForestConfig};
use m3gp_core::dataset::{split, synth, SplitSpec};
use m3gp_core::engine::{evolve, fitness_of};
use m3gp_core::expr::{bundled_hyperfeatures, simplify, Expr};
use m3gp_core::rng::seeded;
use m3gp_core::stats::kruskal_wallis;
use m3gp_core::{Dataset, MdModel, RunConfig};
use rand::Rng;

fn train_set() -> Dataset {
    let all = synth::blobs(2000, 2000, 7, 6.0, "bench", 1);
    split(&all, &SplitSpec::new(2000, 2)).unwrap().0
}

fn expressions(c: &mut Criterion) {
    let train = train_set();
    let hfs = bundled_hyperfeatures();
    let mut rng = seeded(3);
    let trees: Vec<Expr> = (0..100).map(|_| Expr::grow_random(6, 7, &mut rng)).collect();
    c.bench_function("project 2000 rows x 10 formulas", |b| {
        b.iter(|| black_box(train.project(&hfs).unwrap()))
    });
    c.bench_function("simplify 100 random trees", |b| {
        b.iter(|| trees.iter().map(simplify).map(|t| t.size()).sum::<usize>())
    });
}

fn classifier(c: &mut Criterion) {
    let train = train_set();
    let hfs = bundled_hyperfeatures();
    c.bench_function("md fit on 10 hyper-features", |b| {
        b.iter(|| black_box(MdModel::fit_dataset(hfs.clone(), &train).unwrap()))
    });
    let model = MdModel::fit_dataset(hfs.clone(), &train).unwrap();
    c.bench_function("md predict 2000 rows", |b| {
        b.iter(|| black_box(model.predict_dataset(&train).unwrap()))
    });
    c.bench_function("fitness of a 10-dimension individual", |b| {
        b.iter(|| black_box(fitness_of(&hfs, &train)))
    });
}

fn evolution(c: &mut Criterion) {
    let train = train_set();
    let cfg = RunConfig {
        generations: 5,
        ..RunConfig::default()
    };
    let mut group = c.benchmark_group("evolution");
    group.sample_size(10);
    group.bench_function("5 generations, population 200", |b| {
        b.iter(|| black_box(evolve(&train, &cfg, &mut seeded(4)).unwrap()))
    });
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let train = train_set();
    let mut group = c.benchmark_group("baselines");
    group.sample_size(10);
    group.bench_function("unbounded decision tree", |b| {
        b.iter(|| black_box(dt_fit(&train, None).unwrap()))
    });
    group.bench_function("random forest, 100 trees", |b| {
        b.iter(|| black_box(rf_fit(&train, &ForestConfig::default(), 5).unwrap()))
    });
    group.finish();
}

fn statistics(c: &mut Criterion) {
    let mut rng = seeded(6);
    let groups: Vec<Vec<f64>> = (0..4).map(|_| (0..30).map(|_| rng.random::<f64>()).collect()).collect();
    c.bench_function("kruskal-wallis 4 x 30", |b| {
        b.iter(|| black_box(kruskal_wallis(&groups).unwrap()))
    });
}

criterion_group!(benches, expressions, classifier, evolution, baselines, statistics);
criterion_main!(benches);
