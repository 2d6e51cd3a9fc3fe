//! Norm-constrained logistic regression on projected inputs.
//!
//! A few-shot problem fixes a projection `P` (`Û_rᵀ`, the true `W`, or `I_d`
//! for the no-representation baseline) and fits `θ` by minimizing the
//! empirical cross-entropy of `φ(θᵀ P x)` subject to `‖θ‖₂ ≤ a`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, thin_svd, DenseMatrix, SeededRng};
use crate::tasks::{logistic, project_to_ball, softplus, Representation};

#[derive(Debug, Clone)]
pub struct FewShotProblem {
    projection: DenseMatrix,
    /// Row `i` holds `P xᵢ`.
    features: DenseMatrix,
    labels: Vec<f64>,
    norm_budget: f64,
}

impl FewShotProblem {
    /// Checks binary labels and a full-row-rank projection, then caches `P xᵢ`.
    pub fn new(projection: DenseMatrix, inputs: &DenseMatrix, labels: Vec<f64>, norm_budget: f64) -> Result<Self> {
        if inputs.cols() != projection.cols() {
            return Err(Error::DimensionMismatch(format!(
                "projection is {}x{} but inputs have {} columns",
                projection.rows(),
                projection.cols(),
                inputs.cols()
            )));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!("{} inputs but {} labels", inputs.rows(), labels.len())));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidConfig("few-shot labels must be 0 or 1".into()));
        }
        if !(norm_budget >= 0.0) {
            return Err(Error::InvalidConfig(format!("norm budget {norm_budget} must be non-negative")));
        }
        if projection.rows() == 0 || projection.rows() > projection.cols() {
            return Err(Error::RankOutOfRange { r: projection.rows(), d: projection.cols() });
        }
        // Orthonormal rows (subspace bases, the identity) are full rank already.
        if !(projection.row_orthonormality_error() < 1e-8) {
            let s = thin_svd(&projection)?.singular_values;
            if !(s[s.len() - 1] > 1e-10 * s[0]) {
                return Err(Error::RankDeficient { row: s.len() - 1, residual: s[s.len() - 1] });
            }
        }
        let features = inputs.matmul(&projection.transpose())?;
        Ok(Self { projection, features, labels, norm_budget })
    }

    pub fn projection(&self) -> &DenseMatrix {
        &self.projection
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn norm_budget(&self) -> f64 {
        self.norm_budget
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Dimension of `θ`.
    pub fn p(&self) -> usize {
        self.projection.rows()
    }

    fn loss_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.p()];
        for (i, &y) in self.labels.iter().enumerate() {
            let z = self.features.row(i);
            let t = dot(theta, z);
            loss += pointwise_loss(y, t);
            axpy(logistic(t) - y, z, &mut grad);
        }
        let n = self.n() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }
}

/// `−[y log φ(t) + (1 − y) log(1 − φ(t))]`, never negative.
#[inline]
fn pointwise_loss(y: f64, t: f64) -> f64 {
    y * softplus(-t) + (1.0 - y) * softplus(t)
}

pub fn cross_entropy_empirical(theta: &[f64], problem: &FewShotProblem) -> f64 {
    assert_eq!(theta.len(), problem.p());
    let total: f64 = problem.labels.iter().enumerate().map(|(i, &y)| pointwise_loss(y, dot(theta, problem.features.row(i)))).sum();
    total / problem.n() as f64
}

pub fn cross_entropy_gradient(theta: &[f64], problem: &FewShotProblem) -> Vec<f64> {
    assert_eq!(theta.len(), problem.p());
    problem.loss_and_gradient(theta).1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { step_size: 1.0, max_iters: 10_000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotModel {
    pub theta: Vec<f64>,
    /// Empirical loss at `θ₀ = 0` and after every accepted step.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FewShotModel {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace starts with the initial loss")
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            theta: self.theta.clone(),
            converged: self.converged,
            iterations: self.iterations,
            initial_loss: self.loss_trace[0],
            final_loss: self.final_loss(),
            trace_len: self.loss_trace.len(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.summary()).expect("summary serializes"))?;
        Ok(())
    }
}

/// Serialized form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub trace_len: usize,
}

impl ModelSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_owned(), reason: e.to_string() })
    }
}

/// Projected gradient descent from `θ = 0`.
///
/// Each step projects `θ − η∇L` onto the ball `‖θ‖ ≤ a`; `η` is halved until
/// the sufficient-decrease test
/// `L(θ⁺) ≤ L(θ) + ∇L·(θ⁺ − θ) + ‖θ⁺ − θ‖² / (2η)` passes, which also keeps the
/// loss trace non-increasing. Stops once `‖θ⁺ − θ‖ ≤ tol`.
pub fn solve_erm(problem: &FewShotProblem, settings: &SolverSettings) -> Result<FewShotModel> {
    if !(settings.step_size > 0.0) {
        return Err(Error::InvalidConfig(format!("step size {} must be positive", settings.step_size)));
    }
    let p = problem.p();
    let mut theta = vec![0.0; p];
    let (mut loss, mut grad) = problem.loss_and_gradient(&theta);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(0));
    }
    let mut trace = vec![loss];
    if problem.norm_budget == 0.0 {
        return Ok(FewShotModel { theta, loss_trace: trace, converged: true, iterations: 0 });
    }

    let mut step = settings.step_size;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        iterations += 1;
        // Let the step grow back after earlier halvings.
        step = (2.0 * step).min(settings.step_size);
        let (candidate, cand_loss, cand_grad, moved) = loop {
            let raw: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let candidate = project_to_ball(raw, problem.norm_budget);
            let delta: Vec<f64> = candidate.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let moved = norm2(&delta);
            let (cand_loss, cand_grad) = problem.loss_and_gradient(&candidate);
            if !cand_loss.is_finite() {
                return Err(Error::NonFiniteLoss(iterations));
            }
            let bound = loss + dot(&grad, &delta) + moved * moved / (2.0 * step);
            if cand_loss <= bound && cand_loss <= loss {
                break (candidate, cand_loss, cand_grad, moved);
            }
            step *= 0.5;
            if step < 1e-30 {
                // No representable descent step is left.
                return Ok(FewShotModel { theta, loss_trace: trace, converged: true, iterations });
            }
        };
        theta = candidate;
        loss = cand_loss;
        grad = cand_grad;
        trace.push(loss);
        if moved <= settings.tol {
            converged = true;
            break;
        }
    }
    Ok(FewShotModel { theta, loss_trace: trace, converged, iterations })
}

/// Ground truth of a GLM few-shot task: `E[y | x] = φ(θ*ᵀ W x)`.
#[derive(Debug, Clone)]
pub struct GlmTruth<'a> {
    pub rep: &'a Representation,
    pub theta_star: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub stderr: f64,
}

const RISK_BLOCK: usize = 4096;

/// Monte-Carlo population cross-entropy of `φ(θᵀ P x)`.
///
/// `y` is integrated out analytically: with `p* = φ(θ*ᵀ W x)` and `t = θᵀ P x`
/// the integrand is `p*·softplus(−t) + (1 − p*)·softplus(t) = softplus(t) − p*·t`. Inputs are drawn
/// in fixed-size blocks, block `b` on stream `b` of `seed`, and block
/// statistics are merged in block order.
pub fn population_risk(theta: &[f64], projection: &DenseMatrix, truth: &GlmTruth<'_>, mc_samples: usize, seed: u64) -> Result<RiskEstimate> {
    check_risk_dims(theta, projection, truth)?;
    Ok(monte_carlo(truth.rep.d(), mc_samples, seed, |x| {
        let p_star = logistic(dot(truth.theta_star, &truth.rep.project(x)));
        let t = dot(theta, &projection.matvec(x).expect("checked"));
        softplus(t) - p_star * t
    }))
}

/// Paired estimate of `L(θ; P) − L(θ*; W)` using the same inputs for both risks.
pub fn risk_gap(theta: &[f64], projection: &DenseMatrix, truth: &GlmTruth<'_>, mc_samples: usize, seed: u64) -> Result<RiskEstimate> {
    check_risk_dims(theta, projection, truth)?;
    Ok(monte_carlo(truth.rep.d(), mc_samples, seed, |x| {
        let t_star = dot(truth.theta_star, &truth.rep.project(x));
        let p_star = logistic(t_star);
        let t = dot(theta, &projection.matvec(x).expect("checked"));
        (softplus(t) - softplus(t_star)) - p_star * (t - t_star)
    }))
}

fn check_risk_dims(theta: &[f64], projection: &DenseMatrix, truth: &GlmTruth<'_>) -> Result<()> {
    if projection.cols() != truth.rep.d() || projection.rows() != theta.len() || truth.theta_star.len() != truth.rep.r() {
        return Err(Error::DimensionMismatch("theta, projection and ground truth disagree".into()));
    }
    Ok(())
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

fn monte_carlo(d: usize, samples: usize, seed: u64, integrand: impl Fn(&[f64]) -> f64 + Sync) -> RiskEstimate {
    let blocks = samples.div_ceil(RISK_BLOCK);
    let stats: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = SeededRng::new(seed, b as u64);
            let mut x = vec![0.0; d];
            let mut acc = Moments::default();
            let count = RISK_BLOCK.min(samples - b * RISK_BLOCK);
            for _ in 0..count {
                rng.fill_normal(&mut x, 1.0);
                acc.push(integrand(&x));
            }
            acc
        })
        .collect();
    let total = stats.into_iter().fold(Moments::default(), Moments::merge);
    let stderr = if total.count > 1.0 { (total.m2 / (total.count - 1.0) / total.count).sqrt() } else { 0.0 };
    RiskEstimate { value: total.mean, stderr }
}

/// Fraction of samples where `φ(θᵀ P x) ≥ 1/2` agrees with the label.
pub fn classification_accuracy(theta: &[f64], projection: &DenseMatrix, inputs: &DenseMatrix, labels: &[f64]) -> Result<f64> {
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidConfig("evaluation labels must be 0 or 1".into()));
    }
    if inputs.rows() != labels.len() || inputs.cols() != projection.cols() || projection.rows() != theta.len() {
        return Err(Error::DimensionMismatch("theta, projection and evaluation data disagree".into()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let direction = projection.transpose_matvec(theta)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| (dot(&direction, inputs.row(i)) >= 0.0) == (y == 1.0))
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[&[f64]], labels: &[f64], a: f64) -> FewShotProblem {
        let x = DenseMatrix::from_rows(rows);
        FewShotProblem::new(DenseMatrix::identity(x.cols()), &x, labels.to_vec(), a).unwrap()
    }

    #[test]
    fn zero_theta_loss_is_log_two() {
        let p = problem(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.0, 0.0]], &[1.0, 0.0, 1.0], 1.0);
        assert!((cross_entropy_empirical(&[0.0, 0.0], &p) - std::f64::consts::LN_2).abs() < 1e-16);
    }

    #[test]
    fn saturated_separation() {
        let p = problem(&[&[1.0], &[-1.0]], &[1.0, 0.0], f64::INFINITY);
        assert!(cross_entropy_empirical(&[40.0], &p) <= 1e-17);
    }

    #[test]
    fn three_point_hand_sum() {
        // θ = (1): t = 0.5, −1, 2 with labels 1, 1, 0
        let p = problem(&[&[0.5], &[-1.0], &[2.0]], &[1.0, 1.0, 0.0], 10.0);
        let expected = ((1.0 + (-0.5f64).exp()).ln() + (1.0 + 1.0f64.exp()).ln() + (1.0 + 2.0f64.exp()).ln()) / 3.0;
        assert!((cross_entropy_empirical(&[1.0], &p) - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_special_cases() {
        let p = problem(&[&[1.0, 0.0]], &[1.0], 1.0);
        assert_eq!(cross_entropy_gradient(&[0.0, 0.0], &p), vec![-0.5, 0.0]);
        let sym = problem(&[&[1.0, 2.0], &[-1.0, -2.0], &[1.0, 2.0], &[-1.0, -2.0]], &[1.0, 1.0, 0.0, 0.0], 1.0);
        assert!(norm2(&cross_entropy_gradient(&[0.0, 0.0], &sym)) < 1e-16);
    }

    #[test]
    fn degenerate_ball() {
        let p = problem(&[&[1.0], &[-1.0]], &[1.0, 0.0], 0.0);
        let model = solve_erm(&p, &SolverSettings::default()).unwrap();
        assert_eq!(model.theta, vec![0.0]);
        assert!((model.final_loss() - std::f64::consts::LN_2).abs() < 1e-16);
        assert!(model.converged);
    }

    #[test]
    fn invalid_inputs() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        assert!(FewShotProblem::new(DenseMatrix::identity(2), &x, vec![0.5], 1.0).is_err());
        assert!(FewShotProblem::new(DenseMatrix::identity(3), &x, vec![1.0], 1.0).is_err());
        assert!(FewShotProblem::new(DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]), &x, vec![1.0], 1.0).is_err());
        let p = problem(&[&[1.0]], &[1.0], 1.0);
        let bad = SolverSettings { step_size: 0.0, ..Default::default() };
        assert!(solve_erm(&p, &bad).is_err());
    }

    #[test]
    fn separable_line_hits_the_boundary() {
        let p = problem(&[&[0.5], &[1.2], &[-0.3], &[-2.0]], &[1.0, 1.0, 0.0, 0.0], 5.0);
        let model = solve_erm(&p, &SolverSettings::default()).unwrap();
        assert!((model.theta[0] - 5.0).abs() < 1e-9, "{:?}", model.theta);
        let flipped = problem(&[&[0.5], &[1.2], &[-0.3], &[-2.0]], &[0.0, 0.0, 1.0, 1.0], 5.0);
        assert!((solve_erm(&flipped, &SolverSettings::default()).unwrap().theta[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let mut rng = SeededRng::new(3, 0);
        let x = DenseMatrix::from_fn(40, 3, |_, _| rng.standard_normal());
        let labels: Vec<f64> = (0..40).map(|i| if x[(i, 0)] + 0.3 * rng.standard_normal() > 0.0 { 1.0 } else { 0.0 }).collect();
        let p = FewShotProblem::new(DenseMatrix::identity(3), &x, labels, 1.5).unwrap();
        let model = solve_erm(&p, &SolverSettings::default()).unwrap();
        assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(norm2(&model.theta) <= 1.5 * (1.0 + 1e-12));
        assert!(model.converged);
    }

    #[test]
    fn zero_theta_risk_is_exactly_log_two() {
        let rep = Representation::new(DenseMatrix::from_rows(&[[0.0, 1.0, 0.0]])).unwrap();
        let truth = GlmTruth { rep: &rep, theta_star: &[2.0] };
        let est = population_risk(&[0.0, 0.0], &DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), &truth, 10_000, 4).unwrap();
        assert_eq!(est.value, std::f64::consts::LN_2);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn accuracy_special_cases() {
        let x = DenseMatrix::from_rows(&[[1.0], [2.0], [-1.0], [-3.0]]);
        let p = DenseMatrix::identity(1);
        assert_eq!(classification_accuracy(&[1.0], &p, &x, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(classification_accuracy(&[-1.0], &p, &x, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        // θ = 0 predicts class 1 everywhere.
        assert_eq!(classification_accuracy(&[0.0], &p, &x, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!(classification_accuracy(&[0.0], &p, &x, &[2.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn moments_merge_matches_direct() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Moments::default();
        values.iter().for_each(|&v| all.push(v));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        values[..33].iter().for_each(|&v| a.push(v));
        values[33..].iter().for_each(|&v| b.push(v));
        let merged = a.merge(b);
        assert!((merged.mean - all.mean).abs() < 1e-15);
        assert!((merged.m2 - all.m2).abs() < 1e-12);
    }
}
