use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use subbasis_bench::{random_matrix, test_waveform};
use subbasis_core::classifier::{classifier_spec, ClassifierConfig};
use subbasis_core::neural::{Batch, Mode, Network};
use subbasis_core::spectrogram::{mel_spectrogram, FrontEndConfig};
use subbasis_core::subspace::{svd, utterance_feature, SubspaceConfig};
use subbasis_core::audio::{Intelligibility, UtteranceMeta};

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd");
    for t in [50, 100, 200] {
        let m = random_matrix(80, t, t as u64);
        group.bench_with_input(BenchmarkId::new("80xT", t), &m, |b, m| b.iter(|| svd(black_box(m.view())).unwrap()));
    }
    group.finish();
}

fn bench_front_end(c: &mut Criterion) {
    let w = test_waveform(1);
    let fe = FrontEndConfig::default();
    c.bench_function("mel_spectrogram/1s", |b| b.iter(|| mel_spectrogram(black_box(&w), &fe).unwrap()));
    let mel = mel_spectrogram(&w, &fe).unwrap();
    let meta = UtteranceMeta {
        speaker_id: "S".into(),
        block_id: "B1".into(),
        word_id: "W01".into(),
        intelligibility: Intelligibility::M,
    };
    let sub = SubspaceConfig::default();
    c.bench_function("utterance_feature/1s", |b| {
        b.iter(|| utterance_feature(black_box(&mel), &sub, meta.clone()).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let cfg = ClassifierConfig::default();
    let net = Network::<f32>::new(classifier_spec(410, 29, &cfg), 1).unwrap();
    let x: Array2<f32> = random_matrix(64, 410, 2).mapv(|v| v as f32);
    c.bench_function("classifier_forward/64", |b| {
        b.iter(|| net.forward(&Batch::new(black_box(x.view())), Mode::Train, None).unwrap())
    });
}

criterion_group!(benches, bench_svd, bench_front_end, bench_forward);
criterion_main!(benches);
