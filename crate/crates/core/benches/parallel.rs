use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coldq::coldq::InitialPoint;
use coldq::exec::Exec;
use coldq::expert::{run_expert, ExpertSchedule};
use coldq::generators::{GeneratorConfig, JobParams, LeastSquaresParams};
use coldq::metrics::compute_benchmarks;
use coldq::solver::InnerSolverConfig;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn benchmarks(c: &mut Criterion) {
    let cfg = InnerSolverConfig::default();
    let mut group = c.benchmark_group("hindsight_benchmarks");
    group.sample_size(10);
    let streams = [
        ("tv_least_squares", GeneratorConfig::TvLeastSquares(LeastSquaresParams::default())),
        ("job_scheduling", GeneratorConfig::JobScheduling(JobParams::default())),
    ];
    for (name, gen) in &streams {
        let stream = gen.build(0, 500).unwrap();
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(*name, mode), &exec, |b, &exec| {
                b.iter(|| compute_benchmarks(stream.as_ref(), &cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn expert_bank(c: &mut Criterion) {
    let cfg = InnerSolverConfig::default();
    let stream = GeneratorConfig::TvLeastSquares(LeastSquaresParams::default()).build(0, 300).unwrap();
    let schedule = ExpertSchedule::tuned(stream.spec(), 0.5, None).unwrap();
    let mut group = c.benchmark_group("expert_bank");
    group.sample_size(10);
    for (mode, exec) in MODES {
        group.bench_function(mode, |b| {
            b.iter(|| run_expert(stream.as_ref(), schedule.clone(), &cfg, &InitialPoint::Center, 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, benchmarks, expert_bank);
criterion_main!(benches);
