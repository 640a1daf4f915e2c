use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pap_core::ad::check_intensional;
use pap_core::corpus::{self, audit_corpus};
use pap_core::exec::Exec;
use pap_core::numcheck::FdConfig;
use pap_core::parser::parse;
use pap_core::prob::{estimate, SimConfig, TestFn};
use pap_core::rng::Stream;

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn audit(c: &mut Criterion) {
    let program = audit_corpus()
        .into_iter()
        .find(|p| p.name == "counterexample_p")
        .expect("corpus entry");
    let t = parse(&program.source).unwrap();
    let mut rng = Stream::new(1, 0);
    let points: Vec<f64> = (0..1000)
        .map(|_| rng.uniform_in(program.domain.0, program.domain.1))
        .collect();
    let cfg = FdConfig::default();
    let mut group = c.benchmark_group("check_intensional_1000");
    for (label, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &exec, |b, &exec| {
            b.iter(|| check_intensional(black_box(&t), &points, &cfg, 1_000_000, exec).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let t = parse(corpus::GEOMETRIC).unwrap();
    let sim = SimConfig::default();
    let mut group = c.benchmark_group("estimate_geometric_20000");
    group.sample_size(20);
    for (label, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &exec, |b, &exec| {
            b.iter(|| {
                estimate(
                    black_box(&t),
                    &TestFn::Mean { index: 0 },
                    20_000,
                    &sim,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, audit, monte_carlo);
criterion_main!(benches);
