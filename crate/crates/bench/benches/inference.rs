use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use psdg::inference::Observation;
use psdg::synth::{spine_grammar, SpineShape};
use psdg::Psdg;
use psdg_bench::{partial_stream, traffic, warmed_filter};

fn traffic_cycle(c: &mut Criterion) {
    let g = traffic();
    let stream = partial_stream(&g, 40, 7);
    let warmup = stream.len() / 2;
    c.bench_function("traffic cycle, 4 live states", |b| {
        b.iter_batched(
            || warmed_filter(&g, &stream, warmup),
            |mut f| f.observe(&stream[warmup]).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let vacuous: Vec<Observation> = (0..=warmup).map(|t| Observation::vacuous(&g, t)).collect();
    c.bench_function("traffic cycle, 36 live states", |b| {
        b.iter_batched(
            || warmed_filter(&g, &vacuous, warmup),
            |mut f| f.observe(&vacuous[warmup]).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn spine_states(c: &mut Criterion) {
    let mut group = c.benchmark_group("spine cycle by |R|");
    for states in [8, 16, 32] {
        let shape = SpineShape {
            states,
            depth: 2,
            payloads: 5,
            len: 2,
        };
        let g = Psdg::parse(&spine_grammar(&shape)).unwrap();
        let stream: Vec<Observation> = (0..=20).map(|t| Observation::vacuous(&g, t)).collect();
        group.bench_function(states.to_string(), |b| {
            b.iter_batched(
                || warmed_filter(&g, &stream, 20),
                |mut f| f.observe(&stream[20]).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, traffic_cycle, spine_states);
criterion_main!(benches);
