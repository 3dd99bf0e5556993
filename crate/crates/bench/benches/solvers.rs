use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use rulecurve_core::reservoir::{eupen, solve_deterministic, Backend};
use rulecurve_core::stochastic::{generate_scenarios, solve_decoupled};
use rulecurve_core::synth::{synthetic_years, SynthConfig};
use rulecurve_core::{Exec, Scenario, ScenarioGenMethod, TimeGrid};

fn per_scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    for grid in [TimeGrid::monthly(), TimeGrid::weekly()] {
        let spec = eupen(&grid);
        let years = synthetic_years(&SynthConfig::default(), &grid).unwrap();
        let sc = Scenario::from_years(&[&years[0], &years[1]]).unwrap();
        for backend in [Backend::Simplex, Backend::Chain] {
            let id = BenchmarkId::new(format!("{backend:?}"), grid.steps_per_year());
            group.bench_with_input(id, &sc, |b, sc| {
                b.iter(|| solve_deterministic(&spec, black_box(sc), backend).unwrap())
            });
        }
    }
    group.finish();
}

fn envelope(c: &mut Criterion) {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let years = synthetic_years(&SynthConfig::default(), &grid).unwrap();
    let sc = generate_scenarios(&years, ScenarioGenMethod::merging(2)).unwrap();
    let mut group = c.benchmark_group("envelope_merge2");
    group.sample_size(10);
    for backend in [Backend::Simplex, Backend::Chain] {
        for jobs in [1, 0] {
            let exec = Exec { backend, jobs };
            let id = BenchmarkId::new(format!("{backend:?}"), format!("jobs{jobs}"));
            group.bench_function(id, |b| {
                b.iter(|| solve_decoupled(&spec, &sc, &exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, per_scenario, envelope);
criterion_main!(benches);
