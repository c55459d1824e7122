//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().max()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Spectral norm of a symmetric matrix (largest eigenvalue magnitude).
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().amax()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `Aᵀ·X + X·A = −Q` for `X` through the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // column-major vec: vec(AᵀX) = (I ⊗ Aᵀ)·vec(X), vec(XA) = (Aᵀ ⊗ I)·vec(X)
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|x| -x));
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::param("lyapunov", "singular Lyapunov operator"))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// column space of `m`, i.e. of `ker(mᵀ)`.
pub fn left_null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    // Full U is needed, so pad to a square matrix: extra zero columns add
    // nothing to the column space.
    let mut sq = DMatrix::zeros(rows, rows.max(m.ncols()));
    sq.view_mut((0, 0), (rows, m.ncols())).copy_from(m);
    let svd = sq.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<_> = (0..rows)
        .filter(|&k| svd.singular_values[k] <= rel_tol * smax)
        .map(|k| u.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}
