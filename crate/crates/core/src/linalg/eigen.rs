//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Sweep cap for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Converged once the off-diagonal Frobenius norm drops below this fraction of ‖A‖_F.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`. Each column is
/// sign-normalized so that its first non-negligible component is positive.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenResult {
    /// `V · diag(λ) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.eigenvectors.rows();
        let v = &self.eigenvectors;
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            if lambda == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = lambda * v[(i, k)];
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        out
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }
}

/// Eigendecomposition of a (numerically) symmetric matrix.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first; inputs whose asymmetry
/// exceeds `1e-8 · (1 + ‖A‖_max)` are rejected.
pub fn sym_eig(a: &DenseMatrix) -> Result<EigenResult> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.rows(), cols: a.cols() });
    }
    let tolerance = 1e-8 * (1.0 + a.max_abs());
    let asymmetry = a.asymmetry();
    if !(asymmetry <= tolerance) {
        return Err(Error::AsymmetryTooLarge { asymmetry, tolerance });
    }

    let n = a.rows();
    let mut work = a.symmetrized();
    // Rows of `basis` are the eigenvectors; keeps the rotation updates contiguous.
    let mut basis = DenseMatrix::identity(n);
    let threshold = OFF_DIAGONAL_TOLERANCE * work.frobenius_norm();

    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&work) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut work, &mut basis, p, q, sweep);
            }
        }
    }
    if !converged && off_diagonal_norm(&work) > threshold {
        return Err(Error::ConvergenceFailure { routine: "jacobi eigensolver", iterations: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work[(j, j)].total_cmp(&work[(i, i)]).then(i.cmp(&j)));

    let eigenvalues = order.iter().map(|&i| work[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut v = basis.row(src).to_vec();
        normalize_sign(&mut v);
        eigenvectors.set_column(col, &v);
    }
    Ok(EigenResult { eigenvalues, eigenvectors })
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            if i != j {
                sum += v * v;
            }
        }
    }
    sum.sqrt()
}

/// Annihilates `a[p][q]` with one plane rotation.
fn rotate(a: &mut DenseMatrix, basis: &mut DenseMatrix, p: usize, q: usize, sweep: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    // Once past the first few sweeps, entries negligible next to both diagonals are dropped.
    let g = 100.0 * apq.abs();
    if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        return;
    }

    let diff = aqq - app;
    let t = if diff.abs() + g == diff.abs() {
        apq / diff
    } else {
        let theta = 0.5 * diff / apq;
        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    let data = basis.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * n);
    let vp = &mut lo[p * n..(p + 1) * n];
    let vq = &mut hi[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Flips `v` so that its first component above 1e-12 in magnitude is positive.
pub(crate) fn normalize_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12 * scale.max(1e-300)) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
