use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use revspam::classifier::train;
use revspam::features::{Document, FeatureConfig};
use revspam::graph::{map_assignment, MrfParams};
use revspam::{parse_bracketed, FeatureSpace, TrainConfig};
use revspam_bench::{random_graph, synthetic_documents};

fn parsing(c: &mut Criterion) {
    let sentences = synthetic_documents(400, 1).sentences;
    c.bench_function("parse_bracketed/all sentences of 400 reviews", |b| {
        b.iter(|| {
            for s in &sentences {
                black_box(parse_bracketed(s).unwrap());
            }
        })
    });
}

fn featurize(c: &mut Criterion) {
    let data = synthetic_documents(400, 2);
    let (docs, res) = (&data.docs, &data.resources);
    let refs: Vec<&Document> = docs.iter().collect();
    let config = FeatureConfig::parse("up+pos+ad+comp").unwrap();
    c.bench_function("feature_space/build", |b| {
        b.iter(|| FeatureSpace::build(&config, black_box(&refs), res).unwrap())
    });
    let space = FeatureSpace::build(&config, &refs, res).unwrap();
    let pairs: Vec<_> = docs.iter().map(|d| (d, None)).collect();
    c.bench_function("feature_space/assemble_all", |b| {
        b.iter(|| space.assemble_all(black_box(&pairs)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let bd = synthetic_documents(2000, 3);
    let refs: Vec<&Document> = bd.docs.iter().collect();
    let config = FeatureConfig::parse("unigram+up+pos").unwrap();
    let space = FeatureSpace::build(&config, &refs, &bd.resources).unwrap();
    let pairs: Vec<_> = bd.docs.iter().zip(&bd.labels).map(|(d, &l)| (d, Some(l))).collect();
    let data = space.assemble_all(&pairs).unwrap();
    let cfg = TrainConfig::default();
    c.bench_function("maxent/train 2000 reviews", |b| {
        b.iter(|| train(black_box(&data), space.dim(), &cfg).unwrap())
    });
}

fn min_cut(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_assignment");
    let params = MrfParams {
        weights: [1.0, -0.5, 0.3, 2.0],
        bias: -1.0,
        lambda: 0.5,
        mu: 1.0,
    };
    for n in [100, 500, 2000] {
        let g = random_graph(n, 5.0 / n as f64, n as u64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| map_assignment(black_box(g), &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, parsing, featurize, training, min_cut);
criterion_main!(benches);
