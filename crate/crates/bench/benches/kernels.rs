use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use wassineq::config::ConfigFormat;
use wassineq::flow::Stepper;
use wassineq::functionals::{convolve_table, kernel_table};
use wassineq::measures::random_confined_density;
use wassineq::models::{EntropyModel, PotentialPair, ScalarFn};
use wassineq::stationary::solve_reference;
use wassineq::suite::run_suite;
use wassineq::transport::w2_distance;
use wassineq::{ExperimentConfig, Grid1D};

const SIZES: [usize; 3] = [1024, 2048, 4096];

fn grid(n: usize) -> Grid1D {
    Grid1D::new(-10.0, 10.0, n).unwrap()
}

fn interaction() -> PotentialPair {
    PotentialPair::new(ScalarFn::parse("x^2/2").unwrap(), 1.0, ScalarFn::parse("x^2/2").unwrap(), 1.0)
}

fn w2(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2_distance");
    for n in SIZES {
        let g = grid(n);
        let (a, b) = (random_confined_density(1, &g).unwrap(), random_confined_density(2, &g).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| w2_distance(black_box(&a), &b)));
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolve");
    for n in SIZES {
        let g = grid(n);
        let rho = random_confined_density(1, &g).unwrap();
        let table = kernel_table(&ScalarFn::parse("x^4").unwrap(), &g);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| convolve_table(black_box(&rho), &table)));
    }
    group.finish();
}

fn flow_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("flow_step");
    let pot = interaction();
    for n in SIZES {
        let g = grid(n);
        let rho = random_confined_density(1, &g).unwrap();
        for (label, m) in [("boltzmann", EntropyModel::boltzmann()), ("power2", EntropyModel::power(2.0).unwrap())] {
            let stepper = Stepper::new(&m, &pot, &g).unwrap();
            let dt = stepper.dt_max(&rho);
            group.bench_with_input(BenchmarkId::new(label, n), &n, |bench, _| {
                bench.iter(|| stepper.step(black_box(&rho), dt).unwrap())
            });
        }
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_reference");
    group.sample_size(20);
    let pot = interaction();
    for n in SIZES {
        let g = grid(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| solve_reference(&EntropyModel::power(2.0).unwrap(), &pot, None, black_box(&g)).unwrap())
        });
    }
    group.finish();
}

fn suite(c: &mut Criterion) {
    let text = include_str!("../../cli/configs/gaussian_lsi.toml");
    let cfg = ExperimentConfig::parse(text, ConfigFormat::Toml).unwrap();
    let mut group = c.benchmark_group("suite");
    group.sample_size(10);
    group.bench_function("gaussian_lsi", |bench| bench.iter(|| run_suite(black_box(&cfg)).unwrap()));
    group.finish();
}

criterion_group!(benches, w2, convolution, flow_step, stationary, suite);
criterion_main!(benches);
