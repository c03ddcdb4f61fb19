use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use kfasp_core::dsp::{BlockDft, FrameConfig, LoudspeakerHistory};
use kfasp_core::rir::{generate_corpus, simulate_air};
use kfasp_core::subspace::{build_knn_subspace, knn_select};
use kfasp_core::{FusionConfig, KalmanFilter, KfAsp, KfHyperParams, RoomSpec, SceneGeometry, SearchIndex, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: usize = 256;

fn frame() -> FrameConfig {
    FrameConfig::new(L, L, 2, 8000.0).unwrap()
}

fn room() -> RoomSpec {
    RoomSpec { dimensions: [6.0, 5.0, 3.5], t60: 0.3, sample_rate: 8000.0, rir_len: L }
}

fn corpus(k: usize) -> TrainingSet {
    generate_corpus(&room(), &SceneGeometry::reference(), k, L, 1).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn overlap_save(c: &mut Criterion) {
    let ops = BlockDft::new(FrameConfig::new(L, L, 1, 8000.0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let atf = ops.embed_filter(&noise(&mut rng, L)).unwrap();
    let mut hist = LoudspeakerHistory::new(ops.frame());
    hist.push(&[&noise(&mut rng, L)]).unwrap();
    c.bench_function("overlap_save_block_L256", |b| b.iter(|| ops.os_convolve(black_box(hist.channel(0)), &atf).unwrap()));
}

fn kf_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = [noise(&mut rng, L), noise(&mut rng, L)];
    let mic = noise(&mut rng, L);
    let mut kf = KalmanFilter::new(frame(), KfHyperParams::default()).unwrap();
    c.bench_function("kf_step_B2_L256", |b| b.iter(|| kf.step(&[&x[0], &x[1]], black_box(&mic)).unwrap()));
}

fn kfasp_step(c: &mut Criterion) {
    let ops = BlockDft::new(frame()).unwrap();
    let index = Arc::new(SearchIndex::new(corpus(1000), &ops).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = [noise(&mut rng, L), noise(&mut rng, L)];
    let mic = noise(&mut rng, L);
    let mut asp = KfAsp::new(frame(), KfHyperParams::default(), FusionConfig::default(), index).unwrap();
    c.bench_function("kfasp_step_B2_L256_K1000", |b| b.iter(|| asp.step(&[&x[0], &x[1]], black_box(&mic)).unwrap()));
}

fn subspace(c: &mut Criterion) {
    let set = corpus(1000);
    let query = set.vector(0).to_vec();
    c.bench_function("knn_select_K1000_k80", |b| b.iter(|| knn_select(black_box(&query), &set, 80).unwrap()));
    let nn = knn_select(&query, &set, 80).unwrap();
    let rows: Vec<&[f64]> = nn.iter().map(|&k| set.vector(k)).collect();
    c.bench_function("knn_subspace_build_k80", |b| b.iter(|| build_knn_subspace(black_box(&rows)).unwrap()));
}

fn image_source(c: &mut Criterion) {
    let g = SceneGeometry::reference();
    let r = RoomSpec { rir_len: 2048, ..room() };
    let mic = g.point_at(1.0, 0.0, 0.0);
    c.bench_function("image_source_air_W2048", |b| b.iter(|| simulate_air(&r, &g, black_box(mic)).unwrap()));
}

criterion_group!(benches, overlap_save, kf_step, kfasp_step, subspace, image_source);
criterion_main!(benches);
