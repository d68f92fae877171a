//! Dense linear-algebra helpers: symmetric eigendecomposition and
//! column orthonormalization with an explicit rank rule.

use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::error::{FlmError, Result};

/// Relative column-norm tolerance below which a column is treated as
/// linearly dependent on the ones before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.
/// Column `j` of `vectors` belongs to `values[j]`.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition of a symmetric matrix (lower triangle is read).
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(FlmError::DimensionMismatch {
            what: "square matrix",
            expected: n,
            got: a.ncols(),
        });
    }
    let fm = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let evd = fm.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    // faer returns ascending eigenvalues.
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, src) in (0..n).rev().enumerate() {
        let v = s.read(src);
        if !v.is_finite() {
            return Err(FlmError::EigenFailure(format!("non-finite eigenvalue at index {src}")));
        }
        values.push(v);
        for i in 0..n {
            vectors[(i, dst)] = u.read(i, src);
        }
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(FlmError::EigenFailure("non-finite eigenvector entry".into()));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Orthonormal basis of the span of the columns of `a`, processed in order.
///
/// Modified Gram–Schmidt with one reorthogonalization pass. A column whose
/// residual norm falls below `RANK_TOLERANCE` times its original norm (or
/// which is zero) is dropped. `against`, when given, is an orthonormal basis
/// that the output is additionally made orthogonal to.
pub fn orthonormal_columns(a: &DMatrix<f64>, against: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(a.ncols());
    for j in 0..a.ncols() {
        let mut v: Vec<f64> = a.column(j).iter().copied().collect();
        let norm0 = norm(&v);
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            if let Some(basis) = against {
                for c in 0..basis.ncols() {
                    let q = basis.column(c);
                    let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q.iter()) {
                        *vi -= dot * qi;
                    }
                }
            }
            for q in &kept {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let r = norm(&v);
        if r <= RANK_TOLERANCE * norm0 {
            continue;
        }
        for vi in &mut v {
            *vi /= r;
        }
        kept.push(v);
    }
    let mut q = DMatrix::<f64>::zeros(n, kept.len());
    for (j, col) in kept.iter().enumerate() {
        q.column_mut(j).copy_from_slice(col);
    }
    q
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
