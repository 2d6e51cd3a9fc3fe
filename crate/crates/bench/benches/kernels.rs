use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metarep::fewshot::{solve_erm, FewShotProblem, SolverSettings};
use metarep::linalg::{sample_gaussian_matrix, sym_eig, thin_svd, SeededRng};
use metarep::moments::moment_estimator;
use metarep::tasks::{make_representation, sample_task, MetaConfig, MetaDataset, TaskFamily, TaskSpec};

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    group.sample_size(10);
    for d in [20, 50, 100, 200] {
        let a = sample_gaussian_matrix(&mut SeededRng::new(1, 0), d, d, 1.0).symmetrized();
        group.bench_with_input(BenchmarkId::from_parameter(d), &a, |b, a| b.iter(|| sym_eig(black_box(a)).unwrap()));
    }
    group.finish();
}

fn svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("thin_svd");
    for (rows, cols) in [(50, 5), (200, 20), (784, 50)] {
        let a = sample_gaussian_matrix(&mut SeededRng::new(2, 0), rows, cols, 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &a, |b, a| b.iter(|| thin_svd(black_box(a)).unwrap()));
    }
    group.finish();
}

fn moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment_estimator");
    for (k, n) in [(100, 100), (2000, 50)] {
        let config = MetaConfig { seed: 3, d: 50, r: 5, k, n, family: TaskFamily::GlmLogistic { theta_norm_max: f64::INFINITY } };
        let dataset = MetaDataset::generate(&config).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("k{k}_n{n}")), &dataset, |b, ds| b.iter(|| moment_estimator(black_box(ds)).unwrap()));
    }
    group.finish();
}

fn erm(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_erm");
    for (r, n) in [(5, 20), (5, 1000), (50, 200)] {
        let mut rng = SeededRng::new(4, 0);
        let rep = make_representation(&mut rng, r, 50).unwrap();
        let spec = TaskSpec::glm(0, rng.normal_vec(r));
        let data = sample_task(&mut rng, &spec, &rep, n);
        let problem = FewShotProblem::new(rep.matrix().clone(), &data.inputs, data.labels, 5.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("r{r}_n{n}")), &problem, |b, p| {
            b.iter(|| solve_erm(black_box(p), &SolverSettings::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(kernels, eigen, svd, moments, erm);
criterion_main!(kernels);
