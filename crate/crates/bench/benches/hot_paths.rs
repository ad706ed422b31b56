use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use cartographer_bench::gaussian_matrix;
use cartographer_core::atlas::{Atlas, AtlasParams};
use cartographer_core::gesture::{
    canonical_frame, classify, featurize, generate_synthetic_corpus, train_classifier, GestureClass, Hand,
    SyntheticConfig, TrainParams,
};
use cartographer_core::layout::{
    build_knn, exact_knn, fuzzy_simplicial_set, init_layout, optimize_layout, run_layout, Bounds, KnnMode,
    LayoutConfig,
};

fn knn(c: &mut Criterion) {
    let m = gaussian_matrix(2000, 64, 1);
    let mut g = c.benchmark_group("knn");
    g.sample_size(10);
    g.bench_function("exact_2000x64_k15", |b| b.iter(|| exact_knn(black_box(&m), 15).unwrap()));
    g.bench_function("nn_descent_2000x64_k15", |b| {
        b.iter(|| build_knn(black_box(&m), 15, KnnMode::NnDescent, 3).unwrap())
    });
    g.finish();
}

fn optimize(c: &mut Criterion) {
    let m = gaussian_matrix(1000, 16, 2);
    let graph = fuzzy_simplicial_set(&exact_knn(&m, 15).unwrap());
    let config = LayoutConfig { n_epochs: 50, ..LayoutConfig::default() };
    let init = init_layout(&graph, m.ids(), &config).unwrap();
    let mut g = c.benchmark_group("optimize");
    g.sample_size(10);
    g.bench_function("1000_points_50_epochs", |b| {
        b.iter_batched(|| init.clone(), |l| optimize_layout(&graph, &l, &config).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

fn viewport(c: &mut Criterion) {
    let m = gaussian_matrix(20_000, 8, 3);
    let config = LayoutConfig { n_epochs: 20, knn_mode: Some(KnnMode::NnDescent), ..LayoutConfig::default() };
    let layout = run_layout(&m, &config).unwrap();
    let atlas = Atlas::new(&layout, AtlasParams::default()).unwrap();
    let full = atlas.bounds();
    let cx = (full.min_x + full.max_x) / 2.0;
    let cy = (full.min_y + full.max_y) / 2.0;
    let w = (full.max_x - full.min_x) / 8.0;
    let h = (full.max_y - full.min_y) / 8.0;
    let rect = Bounds { min_x: cx - w, min_y: cy - h, max_x: cx + w, max_y: cy + h };
    let deepest = AtlasParams::default().zoom_levels - 1;
    c.bench_function("viewport/full_zoom0", |b| b.iter(|| atlas.query_viewport(black_box(&full), 0).unwrap()));
    c.bench_function("viewport/quarter_deepest", |b| {
        b.iter(|| atlas.query_viewport(black_box(&rect), deepest).unwrap())
    });
}

fn classify_frame(c: &mut Criterion) {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(7, 40));
    let model = train_classifier(&corpus, &TrainParams { epochs: 200, ..TrainParams::default() }).unwrap().0;
    let frame = canonical_frame(GestureClass::Select, Hand::Right);
    c.bench_function("gesture/featurize_and_classify", |b| {
        b.iter(|| classify(&model, &featurize(black_box(&frame)).unwrap()).unwrap())
    });
}

criterion_group!(benches, knn, optimize, viewport, classify_frame);
criterion_main!(benches);
