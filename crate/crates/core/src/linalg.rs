//! Small dense linear-algebra helpers (f64, via nalgebra).

use crate::dataio::SparseDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Columns `x_i` for the listed examples, as a `d x rows.len()` matrix.
pub fn columns<T: Scalar>(ds: &SparseDataset<T>, rows: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(ds.d, rows.len());
    for (c, &i) in rows.iter().enumerate() {
        let (idx, val) = ds.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            m[(j, c)] = v.f64();
        }
    }
    m
}

pub fn all_columns<T: Scalar>(ds: &SparseDataset<T>) -> DMatrix<f64> {
    columns(ds, &(0..ds.n()).collect::<Vec<_>>())
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Minimizer of `(1/2n) ||X^T w - y||^2 + lambda/2 ||w||^2`.
pub fn ridge_solution<T: Scalar>(ds: &SparseDataset<T>, lambda: f64) -> Result<Vec<f64>> {
    let n = ds.n() as f64;
    let x = all_columns(ds);
    let y = DVector::from_iterator(ds.n(), ds.labels.iter().map(|v| v.f64()));
    let a = &x * x.transpose() / n + DMatrix::identity(ds.d, ds.d) * lambda;
    let b = &x * y / n;
    Ok(solve_spd(a, &b)?.iter().copied().collect())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `max { h^T A h : h^T G h <= 1 }` for block-diagonal `G = diag(G_1, ..., G_K)`,
/// restricted to the range of `G`. `blocks` lists the index sets of the blocks.
/// Returns the value and the rank of `G`.
pub fn generalized_max_eigenvalue(a: &DMatrix<f64>, g: &DMatrix<f64>, blocks: &[Vec<usize>]) -> (f64, usize) {
    let n = a.nrows();
    let mut basis_cols: Vec<DVector<f64>> = Vec::new();
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for block in blocks {
        let b = block.len();
        let sub = DMatrix::from_fn(b, b, |r, c| g[(block[r], block[c])]);
        let eig = SymmetricEigen::new(sub);
        for (k, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > 1e-10 * scale {
                let mut col = DVector::zeros(n);
                for (r, &idx) in block.iter().enumerate() {
                    col[idx] = eig.eigenvectors[(r, k)] / ev.sqrt();
                }
                basis_cols.push(col);
            }
        }
    }
    let rank = basis_cols.len();
    if rank == 0 {
        return (0.0, 0);
    }
    let basis = DMatrix::from_columns(&basis_cols);
    let reduced = basis.transpose() * a * &basis;
    let sym = (&reduced + reduced.transpose()) * 0.5;
    (max_eigenvalue(sym), rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_normal_equations() {
        let ds = SparseDataset::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[1.0, 2.0]);
        let w = ridge_solution(&ds, 0.5).unwrap();
        // (X X^T / 2 + 0.5 I) w = X y / 2 -> diag(1, 2.5) w = (0.5, 2)
        assert!((w[0] - 0.5).abs() < 1e-14);
        assert!((w[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn generalized_eigen_identity_blocks() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let g = DMatrix::identity(2, 2);
        let (v, rank) = generalized_max_eigenvalue(&a, &g, &[vec![0], vec![1]]);
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(rank, 2);
    }
}
