use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use engage_bench::{collector_request, encoded, log, timelines, NullStore};
use engage_core::decode_event;
use engage_core::ingest::{worker_drain, ClassifierConfig, IngestConfig, IngestService};
use engage_core::miner::{compare_log, item_stats};
use engage_core::simulator::{generate_session, run_pinging, SessionProfile};
use std::hint::black_box;

fn codec(c: &mut Criterion) {
    let events = log("human", 200);
    let lines = encoded(&events);
    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.bench_function("encode", |b| b.iter(|| encoded(black_box(&events))));
    group.bench_function("decode", |b| {
        b.iter(|| {
            lines
                .iter()
                .map(|l| decode_event(black_box(l)).unwrap())
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

fn pinging(c: &mut Criterion) {
    let sessions = timelines("human", 200);
    let profile = SessionProfile::builtin("human").unwrap();
    let mut group = c.benchmark_group("pinging");
    group.throughput(Throughput::Elements(sessions.len() as u64));
    group.bench_function("replay", |b| {
        b.iter(|| {
            sessions
                .iter()
                .map(|t| run_pinging(black_box(t)).unwrap().len())
                .sum::<usize>()
        })
    });
    group.bench_function("generate", |b| {
        b.iter(|| {
            (0..200)
                .map(|i| generate_session(&profile, 1, i).unwrap().events.len())
                .sum::<usize>()
        })
    });
    group.finish();
}

fn mining(c: &mut Criterion) {
    let events = log("mixed", 1000);
    let mut group = c.benchmark_group("mining");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.bench_function("item_stats", |b| b.iter(|| item_stats(black_box(&events))));
    group.bench_function("compare_log", |b| {
        b.iter(|| compare_log(black_box(&events)).unwrap())
    });
    group.finish();
}

fn ingest(c: &mut Criterion) {
    let lines = encoded(&log("human", 100));
    let meta = collector_request("10.0.0.1");
    let config = IngestConfig {
        queue_capacity: lines.len(),
        classifier: ClassifierConfig {
            rate_ceiling: f64::INFINITY,
            ..ClassifierConfig::default()
        },
        ..IngestConfig::default()
    };
    let mut group = c.benchmark_group("ingest");
    group.throughput(Throughput::Elements(lines.len() as u64));
    group.bench_function("submit_and_drain", |b| {
        b.iter_batched(
            || IngestService::new(&config),
            |service| {
                for line in &lines {
                    service.handle_submit(line, &meta).unwrap();
                }
                worker_drain(service.queue(), &NullStore, config.batch_size).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, codec, pinging, mining, ingest);
criterion_main!(benches);
