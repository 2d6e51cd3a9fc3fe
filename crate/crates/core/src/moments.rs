//! Split-sample moment estimator and population oracles.
//!
//! Each task's samples are split into halves with averages
//! `u = (2/n) Σ_{i ≤ n/2} yᵢxᵢ` and `v = (2/n) Σ_{i > n/2} yᵢxᵢ`. The halves
//! are independent, so `E[u vᵀ] = h hᵀ` with `h = E[y x]`, and
//!
//! ```text
//! M̂ = (1/k) Σ_j (u_j v_jᵀ + v_j u_jᵀ) / 2
//! ```
//!
//! is unbiased for `M = (1/k) Σ_j h_j h_jᵀ`. For a GLM task Stein's identity
//! gives `h_j = E[φ'(g‖θ_j‖)] · Wᵀθ_j`, which is what the quadrature oracle
//! evaluates.

use std::path::Path;

use rayon::prelude::*;

use crate::container::MatrixBundle;
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm2, sym_eig, DenseMatrix, SeededRng};
use crate::quadrature::hermite64;
use crate::tasks::{logistic, MetaDataset, Representation, TaskData, TaskParams, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Sum over tasks divided by `k`.
    PerTaskAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    pub matrix: DenseMatrix,
    pub k_used: usize,
    pub normalization: Normalization,
}

impl MomentMatrix {
    pub fn d(&self) -> usize {
        self.matrix.rows()
    }

    /// `‖self − other‖₂` (both symmetric).
    pub fn spectral_distance(&self, other: &MomentMatrix) -> Result<f64> {
        let diff = self.matrix.sub(&other.matrix)?;
        let eig = sym_eig(&diff)?;
        Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        MatrixBundle::new()
            .with("m", self.matrix.clone())
            .with("k_used", DenseMatrix::from_rows(&[[self.k_used as f64]]))
            .write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle = MatrixBundle::read(path)?;
        let matrix = bundle.require("m", path)?.clone();
        if !matrix.is_square() {
            return Err(Error::Format { path: path.to_owned(), reason: "moment matrix is not square".into() });
        }
        let k_used = bundle.require("k_used", path)?.as_slice()[0] as usize;
        Ok(Self { matrix, k_used, normalization: Normalization::PerTaskAverage })
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        for i in 0..self.d() {
            writer.write_record(self.matrix.row(i).iter().map(|v| v.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Half-sample averages of `y·x` for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMomentVectorPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

pub fn halfsample_means(data: &TaskData) -> Result<TaskMomentVectorPair> {
    let n = data.n();
    if n < 2 || n % 2 != 0 {
        return Err(Error::OddSampleCount(n));
    }
    let half = n / 2;
    let mean_over = |range: std::ops::Range<usize>| {
        let mut acc = vec![0.0; data.d()];
        for i in range {
            axpy(data.labels[i], data.inputs.row(i), &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= half as f64);
        acc
    };
    Ok(TaskMomentVectorPair { first: mean_over(0..half), second: mean_over(half..n) })
}

pub fn moment_estimator(dataset: &MetaDataset) -> Result<MomentMatrix> {
    moment_estimator_from(dataset.data())
}

/// `M̂` over any collection of tasks; accumulation runs in the given order.
pub fn moment_estimator_from<'a>(tasks: impl IntoIterator<Item = &'a TaskData>) -> Result<MomentMatrix> {
    let tasks: Vec<&TaskData> = tasks.into_iter().collect();
    if tasks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = tasks[0].d();
    if let Some(bad) = tasks.iter().find(|t| t.d() != d) {
        return Err(Error::DimensionMismatch(format!("task {} has dimension {} (expected {d})", bad.id, bad.d())));
    }
    let pairs = tasks.par_iter().map(|t| halfsample_means(t)).collect::<Result<Vec<_>>>()?;
    let k = pairs.len();
    let mut m = DenseMatrix::zeros(d, d);
    for pair in &pairs {
        add_symmetric_cross(&mut m, &pair.first, &pair.second);
    }
    m.scale_in_place(1.0 / k as f64);
    Ok(MomentMatrix { matrix: m, k_used: k, normalization: Normalization::PerTaskAverage })
}

/// `m += (u vᵀ + v uᵀ) / 2`; the summand is symmetric bit for bit.
fn add_symmetric_cross(m: &mut DenseMatrix, u: &[f64], v: &[f64]) {
    let d = u.len();
    for i in 0..d {
        let row = m.row_mut(i);
        for j in 0..d {
            row[j] += 0.5 * (u[i] * v[j] + v[i] * u[j]);
        }
    }
}

/// Link function of a GLM task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logistic,
    /// `φ(t) = t`; a closed-form check of the Stein route.
    Identity,
}

impl Link {
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Link::Logistic => {
                let p = logistic(t);
                p * (1.0 - p)
            }
            Link::Identity => 1.0,
        }
    }
}

/// `E[φ'(s·g)]` for `g ~ N(0,1)` by 64-node Gauss-Hermite.
pub fn stein_constant(link: Link, scale: f64) -> f64 {
    hermite64().expect_standard_normal(|g| link.derivative(scale * g))
}

/// `h = E[φ(θᵀWx) x] = E[φ'(g‖Wᵀθ‖)] · Wᵀθ`.
pub fn glm_population_h(spec: &TaskSpec, rep: &Representation) -> Result<Vec<f64>> {
    glm_population_h_with_link(spec.theta()?, rep, Link::Logistic)
}

pub fn glm_population_h_with_link(theta: &[f64], rep: &Representation, link: Link) -> Result<Vec<f64>> {
    if theta.len() != rep.r() {
        return Err(Error::DimensionMismatch(format!("theta has length {}, r = {}", theta.len(), rep.r())));
    }
    let a = rep.lift(theta);
    let c = stein_constant(link, norm2(&a));
    Ok(a.into_iter().map(|v| c * v).collect())
}

/// Population `M = (1/k) Σ h_j h_jᵀ` for logistic GLM tasks.
pub fn glm_population_m(specs: &[TaskSpec], rep: &Representation) -> Result<MomentMatrix> {
    if specs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if specs.iter().any(|s| !matches!(s.params, TaskParams::Glm { .. })) {
        return Err(Error::MixedTaskKinds);
    }
    let hs = specs.iter().map(|s| glm_population_h(s, rep)).collect::<Result<Vec<_>>>()?;
    Ok(assemble_population(&hs, rep.d()))
}

fn assemble_population(hs: &[Vec<f64>], d: usize) -> MomentMatrix {
    let mut m = DenseMatrix::zeros(d, d);
    for h in hs {
        add_symmetric_cross(&mut m, h, h);
    }
    m.scale_in_place(1.0 / hs.len() as f64);
    MomentMatrix { matrix: m, k_used: hs.len(), normalization: Normalization::PerTaskAverage }
}

/// Monte-Carlo population moment with an entrywise standard error.
#[derive(Debug, Clone)]
pub struct MonteCarloMoment {
    pub moment: MomentMatrix,
    /// Entrywise standard error, from batch means.
    pub stderr: DenseMatrix,
}

impl MonteCarloMoment {
    /// `sqrt(Σ stderr²)`, the scale of the Frobenius error.
    pub fn frobenius_stderr(&self) -> f64 {
        self.stderr.frobenius_norm()
    }
}

const MC_BATCHES: usize = 20;

/// Estimates each `h_j = E[f_j(Wx) x]` from `mc_samples` fresh inputs, projects it
/// through `WᵀW` and assembles `M`. Task `j` samples on stream `j` of `seed`.
pub fn mc_population_m(specs: &[TaskSpec], rep: &Representation, mc_samples: usize, seed: u64) -> Result<MonteCarloMoment> {
    if specs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if mc_samples < MC_BATCHES * 2 {
        return Err(Error::InvalidConfig(format!("mc_samples = {mc_samples} is too small")));
    }
    let d = rep.d();
    let per_batch = mc_samples / MC_BATCHES;
    // batch_means[j][b] is task j's estimate of h from batch b.
    let batch_means: Vec<Vec<Vec<f64>>> = specs
        .par_iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut rng = SeededRng::new(seed, j as u64);
            let mut x = vec![0.0; d];
            (0..MC_BATCHES)
                .map(|_| {
                    let mut acc = vec![0.0; d];
                    for _ in 0..per_batch {
                        rng.fill_normal(&mut x, 1.0);
                        axpy(spec.mean(rep, &x), &x, &mut acc);
                    }
                    let z = rep.project(&acc);
                    rep.lift(&z).into_iter().map(|v| v / per_batch as f64).collect()
                })
                .collect()
        })
        .collect();

    let pooled: Vec<Vec<f64>> = batch_means
        .iter()
        .map(|batches| {
            let mut h = vec![0.0; d];
            for b in batches {
                axpy(1.0 / MC_BATCHES as f64, b, &mut h);
            }
            h
        })
        .collect();
    let moment = assemble_population(&pooled, d);

    let per_batch_m: Vec<DenseMatrix> = (0..MC_BATCHES)
        .map(|b| {
            let hs: Vec<Vec<f64>> = batch_means.iter().map(|t| t[b].clone()).collect();
            assemble_population(&hs, d).matrix
        })
        .collect();
    let batches = MC_BATCHES as f64;
    let stderr = DenseMatrix::from_fn(d, d, |i, j| {
        let mean = per_batch_m.iter().map(|m| m[(i, j)]).sum::<f64>() / batches;
        let var = per_batch_m.iter().map(|m| (m[(i, j)] - mean).powi(2)).sum::<f64>() / (batches - 1.0);
        (var / batches).sqrt()
    });
    Ok(MonteCarloMoment { moment, stderr })
}
