//! Thin SVD by one-sided (Hestenes) Jacobi.

use super::eigen::normalize_sign;
use super::matrix::{axpy, dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const ORTHOGONALITY_TOLERANCE: f64 = 1e-15;

/// `A = U · diag(s) · Vᵀ` with `p = min(rows, cols)` columns in `U` and `V`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, p) = self.u.shape();
        let n = self.v.rows();
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..p).map(|k| self.u[(i, k)] * self.singular_values[k] * self.v[(j, k)]).sum()
        })
    }
}

pub fn thin_svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::DimensionMismatch("thin_svd input contains non-finite entries".into()));
    }
    if a.rows() < a.cols() {
        let t = thin_svd_tall(&a.transpose())?;
        return Ok(Svd { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    thin_svd_tall(a)
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
fn thin_svd_tall(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Rows of `cols` are the columns of A being orthogonalized.
    let mut cols = a.transpose();
    let mut right = DenseMatrix::identity(n);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = norm2_sq(cols.row(i));
                let beta = norm2_sq(cols.row(j));
                let gamma = dot(cols.row(i), cols.row(j));
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut cols, i, j, c, s);
                rotate_rows(&mut right, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure { routine: "one-sided jacobi svd", iterations: MAX_SWEEPS });
    }

    let norms: Vec<f64> = (0..n).map(|i| norm2(cols.row(i))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s_max = norms.iter().cloned().fold(0.0, f64::max);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut null_slots = Vec::new();
    for (slot, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        let mut v = right.row(src).to_vec();
        if sigma > 1e-13 * s_max && sigma > 0.0 {
            let mut u: Vec<f64> = cols.row(src).iter().map(|x| x / sigma).collect();
            // Fix the sign on the right factor so results are reproducible.
            let before = v.clone();
            normalize_sign(&mut v);
            if v != before {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            u_cols.push(u);
        } else {
            normalize_sign(&mut v);
            u_cols.push(Vec::new());
            null_slots.push(slot);
        }
        v_cols.push(v);
    }
    complete_orthonormal(&mut u_cols, &null_slots, m);

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    for k in 0..n {
        u.set_column(k, &u_cols[k]);
        v.set_column(k, &v_cols[k]);
    }
    let singular_values = order.iter().map(|&i| norms[i]).collect();
    Ok(Svd { u, singular_values, v })
}

fn norm2_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

fn rotate_rows(m: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    let n = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(j * n);
    let ri = &mut lo[i * n..(i + 1) * n];
    let rj = &mut hi[..n];
    for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
        let (xi, xj) = (*x, *y);
        *x = c * xi - s * xj;
        *y = s * xi + c * xj;
    }
}

/// Fills the empty columns listed in `slots` with unit vectors orthogonal to every other column.
fn complete_orthonormal(columns: &mut [Vec<f64>], slots: &[usize], m: usize) {
    let mut candidate = 0;
    for &slot in slots {
        loop {
            assert!(candidate < m, "cannot complete an orthonormal basis");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for other in columns.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(other, &e);
                    axpy(-proj, other, &mut e);
                }
            }
            let norm = norm2(&e);
            if norm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= norm);
                columns[slot] = e;
                break;
            }
        }
    }
}
