use metarep::linalg::{derive_seed, SeededRng};
use metarep::moments::{glm_population_h, glm_population_m, halfsample_means, mc_population_m, moment_estimator_from, stein_constant, Link};
use metarep::tasks::{generate_task_data, logistic, make_representation, sample_glm_task, sample_relu_task, task_data_stream, Representation, TaskSpec};
use metarep::DenseMatrix;

fn glm_setup(seed: u64, d: usize, r: usize, k: usize) -> (Representation, Vec<TaskSpec>) {
    let rep = make_representation(&mut SeededRng::new(seed, 0), r, d).unwrap();
    let specs = (0..k).map(|j| sample_glm_task(&mut SeededRng::new(seed, 1 + j as u64), &rep, f64::INFINITY, j)).collect();
    (rep, specs)
}

fn m_hat(rep: &Representation, specs: &[TaskSpec], n: usize, seed: u64) -> DenseMatrix {
    let data: Vec<_> = specs
        .iter()
        .map(|s| generate_task_data(&mut SeededRng::new(seed, task_data_stream(s.id)), s, rep, n).unwrap())
        .collect();
    moment_estimator_from(&data).unwrap().matrix
}

#[test]
fn half_sample_means_approach_the_population_vector() {
    let (rep, specs) = glm_setup(1, 5, 2, 1);
    let data = generate_task_data(&mut SeededRng::new(2, 0), &specs[0], &rep, 100_000).unwrap();
    let pair = halfsample_means(&data).unwrap();
    let h = glm_population_h(&specs[0], &rep).unwrap();
    // Each entry of y·x has variance at most E[x²] = 1, so the half means have stderr ≤ 1/√50000.
    for half in [&pair.first, &pair.second] {
        for (a, b) in half.iter().zip(&h) {
            assert!((a - b).abs() < 5.0 / (50_000f64).sqrt(), "{half:?} vs {h:?}");
        }
    }
}

#[test]
fn stein_constant_matches_monte_carlo() {
    let scale = 1.7;
    let mut rng = SeededRng::new(3, 0);
    let n = 10_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let p = logistic(scale * rng.standard_normal());
        let v = p * (1.0 - p);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let stderr = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let quad = stein_constant(Link::Logistic, scale);
    assert!((quad - mean).abs() < 5.0 * stderr, "{quad} vs {mean} ± {stderr}");
    assert!((stein_constant(Link::Identity, scale) - 1.0).abs() < 1e-14);
    assert!((stein_constant(Link::Logistic, 0.0) - 0.25).abs() < 1e-15);
}

#[test]
fn monte_carlo_moment_agrees_with_quadrature() {
    let (rep, specs) = glm_setup(4, 6, 2, 5);
    let oracle = glm_population_m(&specs, &rep).unwrap().matrix;
    let mc = mc_population_m(&specs, &rep, 200_000, 9).unwrap();
    let err = mc.moment.matrix.sub(&oracle).unwrap().frobenius_norm();
    assert!(err < 5.0 * mc.frobenius_stderr(), "{err} vs stderr {}", mc.frobenius_stderr());
}

#[test]
fn relu_moment_is_stable_across_sample_sizes() {
    let rep = make_representation(&mut SeededRng::new(5, 0), 2, 6).unwrap();
    let specs: Vec<_> = (0..3).map(|j| sample_relu_task(&mut SeededRng::new(5, 1 + j as u64), &rep, 8, 1.0, j)).collect();
    let small = mc_population_m(&specs, &rep, 100_000, 1).unwrap();
    let large = mc_population_m(&specs, &rep, 1_000_000, 2).unwrap();
    let diff = small.moment.matrix.sub(&large.moment.matrix).unwrap().frobenius_norm();
    let scale = (small.frobenius_stderr().powi(2) + large.frobenius_stderr().powi(2)).sqrt();
    assert!(diff < 5.0 * scale, "{diff} vs {scale}");
    // Range lies in the row span of W.
    let w = rep.matrix();
    let proj = w.transpose_matmul(w).unwrap();
    let m = &large.moment.matrix;
    let outside = m.sub(&proj.matmul(m).unwrap()).unwrap().frobenius_norm();
    assert!(outside < 1e-10 * m.frobenius_norm());
}

#[test]
fn error_shrinks_like_inverse_root_n() {
    let (rep, specs) = glm_setup(6, 6, 2, 8);
    let oracle = glm_population_m(&specs, &rep).unwrap().matrix;
    let rms = |n: usize| {
        let sq: f64 = (0..10u64).map(|t| m_hat(&rep, &specs, n, derive_seed(&[n as u64, t])).sub(&oracle).unwrap().frobenius_norm().powi(2)).sum();
        (sq / 10.0).sqrt()
    };
    let ratio = rms(2000) / rms(500);
    assert!((0.35..=0.72).contains(&ratio), "ratio {ratio}");
}

#[test]
fn more_tasks_usually_means_smaller_error() {
    let mut wins = 0;
    for seed in 0..50u64 {
        let err = |k: usize| {
            let (rep, specs) = glm_setup(derive_seed(&[seed, k as u64]), 10, 2, k);
            let oracle = glm_population_m(&specs, &rep).unwrap().matrix;
            m_hat(&rep, &specs, 40, seed).sub(&oracle).unwrap().spectral_norm().unwrap()
        };
        if err(400) < err(25) {
            wins += 1;
        }
    }
    assert!(wins >= 45, "{wins}/50");
}
