//! Dense kernels: matrix type, symmetric eigensolver, thin SVD, seeded sampling.

mod eigen;
mod matrix;
mod random;
mod svd;

pub use eigen::{sym_eig, EigenResult, MAX_SWEEPS, OFF_DIAGONAL_TOLERANCE};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use random::{derive_seed, mix64, sample_gaussian_matrix, SeededRng};
pub use svd::{thin_svd, Svd};

use crate::error::{Error, Result};

/// Gram-Schmidt on the rows of `a` (modified, with one re-orthogonalization pass).
///
/// Fails with `RankDeficient` when a row keeps less than `1e-10` of its
/// original norm after projecting out the previous rows.
pub fn orthonormalize_rows(a: &DenseMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = a.shape();
    if rows > cols {
        return Err(Error::RankDeficient { row: cols, residual: 0.0 });
    }
    let mut out = a.clone();
    for i in 0..rows {
        let original = norm2(a.row(i));
        for _ in 0..2 {
            for k in 0..i {
                let (done, rest) = out.as_mut_slice().split_at_mut(i * cols);
                let basis = &done[k * cols..(k + 1) * cols];
                let row = &mut rest[..cols];
                let proj = dot(basis, row);
                axpy(-proj, basis, row);
            }
        }
        let residual = norm2(out.row(i));
        if !(residual > 1e-10 * original) || residual == 0.0 {
            return Err(Error::RankDeficient { row: i, residual });
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= residual);
    }
    Ok(out)
}

/// Random `n×n` orthogonal matrix (orthonormalized Gaussian draw).
pub fn random_orthogonal(rng: &mut SeededRng, n: usize) -> DenseMatrix {
    loop {
        let g = sample_gaussian_matrix(rng, n, n, 1.0);
        if let Ok(q) = orthonormalize_rows(&g) {
            return q;
        }
    }
}
