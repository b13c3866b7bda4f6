use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tirefit::exec::Execution;
use tirefit::fitting::SviConfig;
use tirefit::sensitivity::{log_grid, sobol_indices_with};
use tirefit::study::{run_study_with, StudyConfig};
use tirefit::TireParams;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn sobol(c: &mut Criterion) {
    let center = TireParams::reference();
    let grid = log_grid(1e-3, 1.0, 16);
    let mut group = c.benchmark_group("sobol_16_points");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sobol_indices_with(&center, 0.1, &grid, 4096, 0, exec).unwrap())
        });
    }
    group.finish();
}

fn study(c: &mut Criterion) {
    let config = StudyConfig {
        excitation_levels: vec![0.02, 0.08, 0.3, 0.75],
        n_points: 200,
        svi: SviConfig { steps: 300, moment_samples: 1000, ..SviConfig::default() },
        ..StudyConfig::default()
    };
    let mut group = c.benchmark_group("study_4_levels");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_study_with(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sobol, study);
criterion_main!(benches);
