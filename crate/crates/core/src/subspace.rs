//! Subspace recovery from the moment matrix, Procrustes alignment and recovery metrics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::MatrixBundle;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, thin_svd, DenseMatrix, EigenResult};
use crate::moments::MomentMatrix;
use crate::tasks::Representation;

/// Gaps below this leave the top-r eigenspace ill-defined.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Top-r eigenvectors of `M̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSubspace {
    /// `d×r`, orthonormal columns ordered by descending eigenvalue.
    pub basis: DenseMatrix,
    pub eigenvalues: Vec<f64>,
    /// `λ_r − λ_{r+1}`; infinite when `r = d`.
    pub spectral_gap: f64,
    pub degenerate_gap: bool,
}

impl RecoveredSubspace {
    pub fn r(&self) -> usize {
        self.basis.cols()
    }

    pub fn d(&self) -> usize {
        self.basis.rows()
    }

    /// Truncates a full eigendecomposition to its leading `r` pairs.
    pub fn from_eigen(eig: &EigenResult, r: usize) -> Result<Self> {
        let d = eig.eigenvalues.len();
        if r == 0 || r > d {
            return Err(Error::RankOutOfRange { r, d });
        }
        let spectral_gap = if r < d { eig.eigenvalues[r - 1] - eig.eigenvalues[r] } else { f64::INFINITY };
        Ok(Self {
            basis: eig.eigenvectors.leading_columns(r),
            eigenvalues: eig.eigenvalues[..r].to_vec(),
            spectral_gap,
            degenerate_gap: spectral_gap < DEGENERATE_GAP,
        })
    }

    /// `Û_r diag(λ̂) Û_rᵀ`.
    pub fn rank_r_approximation(&self) -> DenseMatrix {
        let scaled = DenseMatrix::from_fn(self.d(), self.r(), |i, j| self.basis[(i, j)] * self.eigenvalues[j]);
        scaled.matmul(&self.basis.transpose()).expect("shapes agree")
    }

    /// `Û_rᵀ`, the few-shot projection.
    pub fn projection(&self) -> DenseMatrix {
        self.basis.transpose()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        MatrixBundle::new()
            .with("basis", self.basis.clone())
            .with("eigenvalues", DenseMatrix::column_vector(&self.eigenvalues))
            .with("spectral_gap", DenseMatrix::from_rows(&[[self.spectral_gap]]))
            .write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle = MatrixBundle::read(path)?;
        let basis = bundle.require("basis", path)?.clone();
        let eigenvalues = bundle.require("eigenvalues", path)?.as_slice().to_vec();
        let spectral_gap = bundle.require("spectral_gap", path)?.as_slice()[0];
        if eigenvalues.len() != basis.cols() {
            return Err(Error::Format { path: path.to_owned(), reason: "eigenvalue count disagrees with basis".into() });
        }
        Ok(Self { basis, eigenvalues, spectral_gap, degenerate_gap: spectral_gap < DEGENERATE_GAP })
    }
}

pub fn recover_subspace(m_hat: &MomentMatrix, r: usize) -> Result<RecoveredSubspace> {
    let d = m_hat.d();
    if r == 0 || r > d {
        return Err(Error::RankOutOfRange { r, d });
    }
    RecoveredSubspace::from_eigen(&sym_eig(&m_hat.matrix)?, r)
}

/// Orthogonal Procrustes alignment of `Û_r` to `Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub q_hat: DenseMatrix,
    /// `(Û_r Q̂)ᵀ`, `r×d`.
    pub w_hat: DenseMatrix,
    /// `‖Û_r Q̂ − Wᵀ‖_F`.
    pub frobenius_residual: f64,
    /// `‖Ŵ − W‖₂`.
    pub spectral_residual: f64,
}

pub fn procrustes_align(sub: &RecoveredSubspace, rep: &Representation) -> Result<AlignmentResult> {
    align_basis(&sub.basis, rep.matrix())
}

/// Frobenius-optimal `Q̂ = A Bᵀ` from `Uᵀ Wᵀ = A S Bᵀ`.
pub fn align_basis(basis: &DenseMatrix, w: &DenseMatrix) -> Result<AlignmentResult> {
    check_dims(basis, w)?;
    let cross = w.matmul(basis)?.transpose();
    let svd = thin_svd(&cross)?;
    let q_hat = svd.u.matmul(&svd.v.transpose())?;
    let aligned = basis.matmul(&q_hat)?;
    let w_hat = aligned.transpose();
    let diff = w_hat.sub(w)?;
    Ok(AlignmentResult {
        frobenius_residual: diff.frobenius_norm(),
        spectral_residual: diff.spectral_norm()?,
        q_hat,
        w_hat,
    })
}

fn check_dims(basis: &DenseMatrix, w: &DenseMatrix) -> Result<()> {
    if basis.rows() != w.cols() || basis.cols() != w.rows() {
        return Err(Error::DimensionMismatch(format!(
            "basis is {}x{} but W is {}x{}",
            basis.rows(),
            basis.cols(),
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// `‖Û_rᵀ Wᵀ‖_F² / r`.
pub fn subspace_correlation(sub: &RecoveredSubspace, rep: &Representation) -> Result<f64> {
    basis_correlation(&sub.basis, rep.matrix())
}

pub fn basis_correlation(basis: &DenseMatrix, w: &DenseMatrix) -> Result<f64> {
    check_dims(basis, w)?;
    let cross = w.matmul(basis)?;
    Ok(cross.frobenius_norm().powi(2) / basis.cols() as f64)
}

/// Largest principal angle between the column span of `a` and that of `b`
/// (both orthonormal). Computed from the projection residual so that small
/// angles keep full relative accuracy.
pub fn max_principal_angle(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!("ambient dimensions {} and {}", a.rows(), b.rows())));
    }
    // (I − B Bᵀ) A
    let residual = a.sub(&b.matmul(&b.transpose_matmul(a)?)?)?;
    Ok(residual.spectral_norm()?.min(1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanRecord {
    /// `‖Ŵ − W‖₂` after alignment.
    pub lhs: f64,
    /// `‖M̂ − M‖₂ / (λ_r(M) − ‖M̂ − M‖₂)`.
    pub rhs: f64,
    pub perturbation: f64,
    pub lambda_r: f64,
    pub holds: bool,
}

/// Checks `‖Ŵ − W‖₂ ≤ ‖M̂ − M‖₂ / (λ_r(M) − ‖M̂ − M‖₂)`.
///
/// Returns `GapViolated` when `λ_r(M) ≤ ‖M̂ − M‖₂`, where the bound says nothing.
/// The comparison allows `1e-12` of absolute slack for eigensolver round-off.
pub fn davis_kahan_check(m_hat: &MomentMatrix, m_oracle: &MomentMatrix, rep: &Representation, r: usize) -> Result<DavisKahanRecord> {
    let perturbation = m_hat.spectral_distance(m_oracle)?;
    let oracle_eig = sym_eig(&m_oracle.matrix)?;
    if r == 0 || r > oracle_eig.eigenvalues.len() {
        return Err(Error::RankOutOfRange { r, d: oracle_eig.eigenvalues.len() });
    }
    let lambda_r = oracle_eig.eigenvalues[r - 1];
    if !(lambda_r > perturbation) {
        return Err(Error::GapViolated { perturbation, lambda_r });
    }
    let lhs = procrustes_align(&recover_subspace(m_hat, r)?, rep)?.spectral_residual;
    let rhs = perturbation / (lambda_r - perturbation);
    Ok(DavisKahanRecord { lhs, rhs, perturbation, lambda_r, holds: lhs <= rhs * (1.0 + 1e-9) + 1e-12 })
}

/// Eigenvalues, residuals and correlation written next to the binary files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceSummary {
    pub r: usize,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: f64,
    pub degenerate_gap: bool,
    pub subspace_correlation: Option<f64>,
    pub frobenius_residual: Option<f64>,
    pub spectral_residual: Option<f64>,
}

impl SubspaceSummary {
    pub fn new(sub: &RecoveredSubspace, alignment: Option<(&AlignmentResult, f64)>) -> Self {
        Self {
            r: sub.r(),
            d: sub.d(),
            eigenvalues: sub.eigenvalues.clone(),
            spectral_gap: sub.spectral_gap,
            degenerate_gap: sub.degenerate_gap,
            subspace_correlation: alignment.map(|(_, c)| c),
            frobenius_residual: alignment.map(|(a, _)| a.frobenius_residual),
            spectral_residual: alignment.map(|(a, _)| a.spectral_residual),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("summary serializes"))?;
        Ok(())
    }
}
