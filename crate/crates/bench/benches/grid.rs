use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use retrofit_core::grid::config::desk4;
use retrofit_core::grid::{build_grid, design_modules, simulate_grid, solve_equilibrium, FaultEvent, Module, Scenario};

fn fault_run(c: &mut Criterion) {
    let g = build_grid(&desk4()).unwrap();
    let eq = solve_equilibrium(&g, None).unwrap();
    let modules = design_modules(&g, &eq).unwrap();
    let scenario = Scenario { fault: Some(FaultEvent::new(g.generators[0].bus)), initial_offset: None };
    let none: Vec<Option<Module>> = vec![None; g.ngen()];
    let all: Vec<Option<Module>> = modules.iter().map(|m| Some(Module::Rectified(&m.tuning.k_hat))).collect();

    let mut group = c.benchmark_group("desk4_fault_2s");
    group.sample_size(10);
    group.bench_function("no_modules", |b| {
        b.iter(|| simulate_grid(&g, &eq, black_box(&scenario), &none, 1e-3, 2.0).unwrap())
    });
    group.bench_function("all_modules", |b| {
        b.iter(|| simulate_grid(&g, &eq, black_box(&scenario), &all, 1e-3, 2.0).unwrap())
    });
    group.finish();
}

fn equilibrium(c: &mut Criterion) {
    let g = build_grid(&desk4()).unwrap();
    c.bench_function("desk4_equilibrium", |b| b.iter(|| solve_equilibrium(black_box(&g), None).unwrap()));
}

criterion_group!(benches, fault_run, equilibrium);
criterion_main!(benches);
