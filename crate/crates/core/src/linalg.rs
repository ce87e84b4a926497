//! Thin bridge between `ndarray` (public API) and `faer` (dense kernels).

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, MatRef, Par, Side};
use ndarray::{Array2, ArrayView2};

use crate::error::{Result, StlError};

pub(crate) fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn to_nd(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues ascending with matching eigenvector columns.
pub(crate) fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| StlError::numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StlError::numerical("non-finite eigenvalue"));
    }
    Ok((values, evd.U().to_owned()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| StlError::numerical(format!("pencil is not positive definite: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// `L⁻¹ rhs`.
pub(crate) fn solve_lower(l: MatRef<'_, f64>, mut rhs: Mat<f64>) -> Mat<f64> {
    solve_lower_triangular_in_place(l, rhs.as_mut(), Par::Seq);
    rhs
}

/// `L⁻ᵀ rhs`.
pub(crate) fn solve_lower_transpose(l: MatRef<'_, f64>, mut rhs: Mat<f64>) -> Mat<f64> {
    solve_upper_triangular_in_place(l.transpose(), rhs.as_mut(), Par::Seq);
    rhs
}

/// Averages a square matrix with its transpose in place.
pub(crate) fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Subtracts each column's mean: `H x` for the centering matrix `H`.
pub(crate) fn center_columns(x: &mut Mat<f64>) {
    let n = x.nrows() as f64;
    for j in 0..x.ncols() {
        let mean = x.col(j).iter().sum::<f64>() / n;
        for v in x.col_mut(j).iter_mut() {
            *v -= mean;
        }
    }
}

/// Orthonormalizes the columns of `x` against `basis` and each other (two
/// passes of modified Gram-Schmidt). Columns that vanish below `drop_tol`
/// relative to their input norm are discarded.
pub(crate) fn orthonormalize_against(basis: &[Mat<f64>], x: Mat<f64>, drop_tol: f64) -> Mat<f64> {
    let n = x.nrows();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut v: Vec<f64> = x.col(j).iter().copied().collect();
        let norm0 = norm(&v);
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in basis {
                for k in 0..b.ncols() {
                    let col = b.col(k);
                    let d: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (vi, ci) in v.iter_mut().zip(col.iter()) {
                        *vi -= d * ci;
                    }
                }
            }
            for q in &kept {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv > drop_tol * norm0 {
            v.iter_mut().for_each(|x| *x /= nv);
            kept.push(v);
        }
    }
    Mat::from_fn(n, kept.len(), |i, j| kept[j][i])
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
