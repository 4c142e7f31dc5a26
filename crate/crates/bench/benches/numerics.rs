use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use retrofit_core::analysis::hinf_norm;
use retrofit_core::lqr::{is_stabilizable, solve_care, CareProblem};
use retrofit_core::synthetic::{gaussian_matrix, random_small_plant, random_stable};
use retrofit_core::youla::output_rectifying_controller;
use retrofit_core::{DMatrix, StateSpace};

fn stable_system(n: usize) -> StateSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    random_stable(&mut rng, n, 2, 2, 1.0)
}

fn care_problem(n: usize) -> CareProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
    loop {
        let a = gaussian_matrix(&mut rng, n, n);
        let b = gaussian_matrix(&mut rng, n, 2);
        if is_stabilizable(&a, &b).unwrap() {
            return CareProblem::new(a, b, DMatrix::identity(n, n), DMatrix::identity(2, 2)).unwrap();
        }
    }
}

fn hinf(c: &mut Criterion) {
    let mut group = c.benchmark_group("hinf_norm");
    for n in [4, 8, 16, 32] {
        let sys = stable_system(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sys, |b, sys| {
            b.iter(|| hinf_norm(black_box(sys), 1e-10).unwrap())
        });
    }
    group.finish();
}

fn care(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_care");
    for n in [4, 8, 16, 32] {
        let prob = care_problem(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &prob, |b, prob| {
            b.iter(|| solve_care(black_box(prob)).unwrap())
        });
    }
    group.finish();
}

fn rectifier(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let plant = random_small_plant(&mut rng, 4).unwrap();
    let k_hat = StateSpace::static_gain(DMatrix::from_element(
        plant.input_width("u").unwrap(),
        plant.output_width("y").unwrap(),
        -0.1,
    ));
    c.bench_function("output_rectifying_controller", |b| {
        b.iter(|| output_rectifying_controller(black_box(&plant), black_box(&k_hat)).unwrap())
    });
}

criterion_group!(benches, hinf, care, rectifier);
criterion_main!(benches);
