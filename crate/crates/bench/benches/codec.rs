use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use remiclip::remi::{detect_chords, encode, repair};
use remiclip::rng::seeded;
use remiclip::synthetic::{random_grid_piece, random_token_stream};
use remiclip::{parse_smf, quantize, write_smf, QuantizedPiece};

fn piece(bars: u32) -> QuantizedPiece {
    let mut p = random_grid_piece(&mut seeded(u64::from(bars)), bars);
    p.bar_count = bars;
    p
}

fn midi(c: &mut Criterion) {
    let mut group = c.benchmark_group("midi");
    for bars in [16, 64] {
        let bytes = write_smf(&piece(bars)).unwrap();
        group.throughput(Throughput::Bytes(bytes.len() as u64));
        group.bench_with_input(BenchmarkId::new("parse", bars), &bytes, |b, bytes| {
            b.iter(|| parse_smf(black_box(bytes)))
        });
        let parsed = parse_smf(&bytes).unwrap();
        group.bench_with_input(BenchmarkId::new("quantize", bars), &parsed, |b, m| b.iter(|| quantize(black_box(m))));
    }
    group.finish();
}

fn remi(c: &mut Criterion) {
    let mut group = c.benchmark_group("remi");
    for bars in [16, 64] {
        let p = piece(bars);
        let chords = detect_chords(&p);
        group.bench_with_input(BenchmarkId::new("detect_chords", bars), &p, |b, p| {
            b.iter(|| detect_chords(black_box(p)))
        });
        group.bench_with_input(BenchmarkId::new("encode", bars), &p, |b, p| b.iter(|| encode(black_box(p), &chords)));
    }
    for len in [512, 4096] {
        let raw = random_token_stream(&mut seeded(len as u64), len);
        group.throughput(Throughput::Elements(raw.len() as u64));
        group.bench_with_input(BenchmarkId::new("repair", len), &raw, |b, raw| b.iter(|| repair(black_box(raw))));
    }
    group.finish();
}

criterion_group!(benches, midi, remi);
criterion_main!(benches);
