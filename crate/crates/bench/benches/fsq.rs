use chartseam::tokenizer::{fsq_quantize, pack, GEO_SLOTS, LEVELS};
use chartseam_bench::features;
use criterion::{criterion_group, criterion_main, Criterion};

fn fsq(c: &mut Criterion) {
    let batch = features(4_096, GEO_SLOTS, 1);
    c.bench_function("fsq_quantize_pack_4k", |b| {
        b.iter(|| {
            batch
                .iter()
                .map(|f| {
                    let (levels, _) = fsq_quantize(f, GEO_SLOTS, LEVELS).unwrap();
                    pack(&levels, LEVELS).unwrap()
                })
                .sum::<usize>()
        })
    });
}

criterion_group!(benches, fsq);
criterion_main!(benches);
