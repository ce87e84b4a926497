//! Symmetric-definite generalized eigensolvers.
//!
//! Two routes solve `A w = φ B w` for the smallest φ:
//!
//! * dense: Cholesky `B = LLᵀ`, full eigendecomposition of `L⁻¹ A L⁻ᵀ`, or
//!   the same with the roles of `A` and `B` swapped when `A` is definite;
//! * block Krylov: for `A = λI + UUᵀ` with λ > 0 and a matrix-free `B`, the
//!   largest eigenpairs of `A^{-1/2} B A^{-1/2}` are found by restarted block
//!   Rayleigh-Ritz, so only `B` products of thin blocks are needed.

use faer::{Mat, MatRef};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, StlError};
use crate::linalg::{
    cholesky, orthonormalize_against, solve_lower, solve_lower_transpose, sym_eigen, symmetrize, to_faer, to_nd,
};

/// Eigenpairs of a pencil, eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct PencilEigenpairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// The `m` smallest eigenpairs of the dense pencil `(a, b)`, `b` positive
/// definite. Eigenvectors come back `b`-orthonormal.
pub fn smallest_pencil_eigenpairs(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, m: usize) -> Result<PencilEigenpairs> {
    let n = a.nrows();
    if !a.is_square() || b.dim() != a.dim() {
        return Err(StlError::invalid("pencil matrices must be square and equally sized"));
    }
    if m == 0 || m > n {
        return Err(StlError::invalid(format!("cannot take {m} eigenpairs of an order-{n} pencil")));
    }
    let (values, vectors) = dense_smallest(to_faer(a), to_faer(b).as_ref(), m)?;
    Ok(PencilEigenpairs {
        values,
        vectors: to_nd(vectors.as_ref()),
    })
}

pub(crate) fn dense_smallest(a: Mat<f64>, b: MatRef<'_, f64>, m: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let l = cholesky(b)?;
    // C = L⁻¹ A L⁻ᵀ, using symmetry of A: (L⁻¹ A)ᵀ = A L⁻ᵀ
    let la = solve_lower(l.as_ref(), a);
    let mut c = solve_lower(l.as_ref(), la.transpose().to_owned());
    symmetrize(&mut c);
    let (values, y) = sym_eigen(c.as_ref())?;
    let y = y.subcols(0, m).to_owned();
    let w = solve_lower_transpose(l.as_ref(), y);
    Ok((values[..m].to_vec(), w))
}

/// Same pairs as [`dense_smallest`], found through the reciprocal pencil
/// `B w = θ A w` (φ = 1/θ). Needs `A` positive definite and `B` positive
/// definite; preferable when `A` is the better conditioned of the two.
pub(crate) fn dense_reciprocal(a: MatRef<'_, f64>, b: Mat<f64>, m: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let l = cholesky(a)?;
    let lb = solve_lower(l.as_ref(), b);
    let mut c = solve_lower(l.as_ref(), lb.transpose().to_owned());
    symmetrize(&mut c);
    let (theta, y) = sym_eigen(c.as_ref())?;
    let n = theta.len();
    if theta[n - m..].iter().any(|&t| !(t > 0.0)) {
        return Err(StlError::numerical("right-hand matrix is not positive definite"));
    }
    let top = Mat::from_fn(n, m, |i, j| y[(i, n - 1 - j)]);
    let values = (0..m).map(|j| 1.0 / theta[n - 1 - j]).collect();
    Ok((values, solve_lower_transpose(l.as_ref(), top)))
}

/// `A = λI + Q diag(σ) Qᵀ` with orthonormal `Q`, σ ≥ 0.
pub(crate) struct ShiftedLowRank {
    lambda: f64,
    q: Mat<f64>,
    sigma: Vec<f64>,
}

impl ShiftedLowRank {
    /// Factors `λI + UUᵀ`. Requires λ > 0.
    pub(crate) fn new(lambda: f64, u: MatRef<'_, f64>) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(StlError::invalid("low-rank shift needs lambda > 0"));
        }
        let q = orthonormalize_against(&[], u.to_owned(), 1e-12);
        // UUᵀ = Q (QᵀU)(QᵀU)ᵀ Qᵀ; diagonalize the small middle factor
        let qu = q.transpose() * u;
        let mut t = &qu * qu.transpose();
        symmetrize(&mut t);
        let (sigma, s) = sym_eigen(t.as_ref())?;
        Ok(Self {
            lambda,
            q: &q * &s,
            sigma: sigma.into_iter().map(|v| v.max(0.0)).collect(),
        })
    }

    /// `A^p x` for a real power `p`.
    pub(crate) fn pow_apply(&self, p: f64, x: MatRef<'_, f64>) -> Mat<f64> {
        let base = self.lambda.powf(p);
        let mut out = x.to_owned() * faer::Scale(base);
        if self.q.ncols() > 0 {
            let mut coef = self.q.transpose() * x;
            for (i, s) in self.sigma.iter().enumerate() {
                let d = (self.lambda + s).powf(p) - base;
                for j in 0..coef.ncols() {
                    coef[(i, j)] *= d;
                }
            }
            out += &self.q * &coef;
        }
        out
    }
}

/// Settings for the restarted block Krylov eigensolver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KrylovOptions {
    pub block: usize,
    pub depth: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl KrylovOptions {
    pub(crate) fn for_size(n: usize, k: usize) -> Self {
        let block = (k + (k / 2).max(8)).min(n);
        Self {
            block,
            depth: 4,
            tol: 1e-12,
            max_restarts: 300,
            seed: 0x5eed,
        }
    }
}

/// Largest `k` eigenpairs of the symmetric operator `op` (descending).
///
/// Converged when every returned pair has `‖Mv − θv‖ ≤ tol · θ_max`.
pub(crate) fn largest_eigenpairs(
    n: usize,
    k: usize,
    op: impl Fn(MatRef<'_, f64>) -> Mat<f64>,
    opts: KrylovOptions,
) -> Result<(Vec<f64>, Mat<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = Mat::from_fn(n, opts.block, |_, _| StandardNormal.sample(&mut rng));
    let mut x = orthonormalize_against(&[], start, 1e-12);
    let max_cols = (opts.block * opts.depth).min(n);

    for restart in 0..opts.max_restarts {
        let mut basis: Vec<Mat<f64>> = Vec::new();
        let mut images: Vec<Mat<f64>> = Vec::new();
        let mut block = x;
        let mut cols = 0;
        loop {
            let image = op(block.as_ref());
            cols += block.ncols();
            basis.push(block);
            let next = if cols < max_cols {
                let mut cand = orthonormalize_against(&basis, image.clone(), 1e-10);
                let room = max_cols - cols;
                if cand.ncols() > room {
                    cand = cand.subcols(0, room).to_owned();
                }
                Some(cand)
            } else {
                None
            };
            images.push(image);
            match next {
                Some(b) if b.ncols() > 0 => block = b,
                _ => break,
            }
        }
        let v = hcat(&basis);
        let mv = hcat(&images);
        let mut t = v.transpose() * &mv;
        symmetrize(&mut t);
        let (theta, s) = sym_eigen(t.as_ref())?;
        let total = theta.len();
        if total < k {
            return Err(StlError::numerical(format!(
                "Krylov basis collapsed to {total} vectors, {k} requested"
            )));
        }
        // descending order
        let order: Vec<usize> = (0..total).rev().collect();
        let theta_max = theta[order[0]].abs().max(f64::MIN_POSITIVE);
        let top = Mat::from_fn(total, k, |i, j| s[(i, order[j])]);
        let ritz = &v * &top;
        let ritz_img = &mv * &top;
        let worst = (0..k)
            .map(|j| {
                let th = theta[order[j]];
                ritz_img
                    .col(j)
                    .iter()
                    .zip(ritz.col(j).iter())
                    .map(|(a, b)| (a - th * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        if worst <= opts.tol * theta_max {
            log::debug!("block Krylov converged after {} restarts", restart + 1);
            let values = (0..k).map(|j| theta[order[j]]).collect();
            return Ok((values, ritz));
        }
        let keep = opts.block.min(total);
        let sel = Mat::from_fn(total, keep, |i, j| s[(i, order[j])]);
        x = orthonormalize_against(&[], &v * &sel, 1e-12);
    }
    Err(StlError::numerical(format!(
        "block Krylov eigensolver did not converge in {} restarts",
        opts.max_restarts
    )))
}

fn hcat(blocks: &[Mat<f64>]) -> Mat<f64> {
    let n = blocks[0].nrows();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, total);
    let mut at = 0;
    for b in blocks {
        out.as_mut().subcols_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}
