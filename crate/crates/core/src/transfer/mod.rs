//! Subspace learning for stratified transfer.
//!
//! Finds `W` minimizing `Σ_c tr(Wᵀ K L_c K W) + λ tr(WᵀW)` subject to
//! `Wᵀ K H K W = I` through the generalized eigenproblem
//! `(K Σ_c L_c K + λI) w = φ (K H K) w`, keeping the `m` smallest φ.
//! The right-hand matrix is singular (H annihilates the constant vector), so
//! it is regularized with `ε I`.

mod pca;
mod pencil;

pub use pca::{pca_baseline, Pca};
pub use pencil::{smallest_pencil_eigenpairs, PencilEigenpairs};

use faer::{Mat, MatRef};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StlError};
use crate::kernel::KernelMatrix;
use crate::linalg::{center_columns, symmetrize, to_faer, to_nd};
use crate::mmd::{CenteringMatrix, IntraClassMMDMatrix};
use pencil::{dense_reciprocal, dense_smallest, largest_eigenpairs, KrylovOptions, ShiftedLowRank};

/// Above this order, and with λ > 0, [`SolverRoute::Auto`] uses the Krylov route.
pub const DENSE_LIMIT: usize = 1200;

/// Relative regularization: ε = `DEFAULT_EPS_SCALE` · tr(KHK) / n.
pub const DEFAULT_EPS_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverRoute {
    #[default]
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Subspace dimension m.
    pub dim: usize,
    /// Trade-off λ on `tr(WᵀW)`.
    pub lambda: f64,
    /// Absolute pencil regularization; `None` picks `1e-9 · tr(KHK) / n`.
    pub eps: Option<f64>,
    pub route: SolverRoute,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            dim: 30,
            lambda: 1.0,
            eps: None,
            route: SolverRoute::Auto,
        }
    }
}

impl TransferConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(StlError::invalid("subspace dimension must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(StlError::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(eps) = self.eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(StlError::invalid(format!("eps must be >= 0, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Projection `W` ((n1 + n2) x m) with its eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    w: Array2<f64>,
    eigenvalues: Vec<f64>,
    n_source: usize,
    eps: f64,
}

impl TransformMatrix {
    /// Wraps an externally built projection, e.g. a column selector.
    pub fn new(w: Array2<f64>, eigenvalues: Vec<f64>, n_source: usize) -> Result<Self> {
        if eigenvalues.len() != w.ncols() || n_source > w.nrows() {
            return Err(StlError::invalid("transform shape mismatch"));
        }
        Ok(Self {
            w,
            eigenvalues,
            n_source,
            eps: 0.0,
        })
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    /// The multipliers φ, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// Regularization ε that was added to `KHK` when solving.
    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// `Z = Wᵀ K`: column j is sample j in the learned subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedData {
    z: Array2<f64>,
    n_source: usize,
}

impl TransformedData {
    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    /// Transformed source samples as rows.
    pub fn source_rows(&self) -> Array2<f64> {
        self.z.slice(ndarray::s![.., ..self.n_source]).t().to_owned()
    }

    /// Transformed candidate samples as rows.
    pub fn candidate_rows(&self) -> Array2<f64> {
        self.z.slice(ndarray::s![.., self.n_source..]).t().to_owned()
    }
}

/// Solves for the stratified projection over the stacked source + candidate set.
pub fn solve_stl_transform(
    k: &KernelMatrix,
    l: &IntraClassMMDMatrix,
    h: &CenteringMatrix,
    cfg: &TransferConfig,
) -> Result<TransformMatrix> {
    cfg.validate()?;
    let n = k.n();
    if l.n() != n || h.n() != n {
        return Err(StlError::invalid(format!(
            "size mismatch: K is {n}, L is {}, H is {}",
            l.n(),
            h.n()
        )));
    }
    if cfg.dim > n {
        return Err(StlError::invalid(format!("subspace dimension {} exceeds {n} samples", cfg.dim)));
    }
    let kf = to_faer(k.entries());
    let e = to_faer(l.factor_matrix().view());
    // K Σ L_c K = U Uᵀ
    let u = &kf * &e;

    // tr(KHK) = ‖HK‖²_F
    let mut hk = kf.clone();
    center_columns(&mut hk);
    let trace = hk.squared_norm_l2();
    let eps = match cfg.eps {
        Some(eps) => eps,
        None => {
            let eps = DEFAULT_EPS_SCALE * trace / n as f64;
            if eps > 0.0 {
                eps
            } else {
                DEFAULT_EPS_SCALE
            }
        }
    };

    let use_krylov = match cfg.route {
        SolverRoute::Dense => false,
        SolverRoute::Krylov => true,
        SolverRoute::Auto => n > DENSE_LIMIT && cfg.lambda > 0.0 && cfg.dim * 4 < n,
    };
    let (values, w) = if use_krylov {
        krylov_route(&kf, u.as_ref(), cfg.lambda, eps, cfg.dim)?
    } else {
        let mut a = &u * u.transpose();
        for i in 0..n {
            a[(i, i)] += cfg.lambda;
        }
        symmetrize(&mut a);
        let mut b = &kf * &hk;
        symmetrize(&mut b);
        for i in 0..n {
            b[(i, i)] += eps;
        }
        if cfg.lambda > 0.0 {
            // A is bounded below by λ, while B's floor is the tiny ε
            dense_reciprocal(a.as_ref(), b, cfg.dim)?
        } else {
            dense_smallest(a, b.as_ref(), cfg.dim)?
        }
    };
    if values.iter().any(|v| !v.is_finite()) || w.col_iter().flat_map(|c| c.iter().copied()).any(|v| !v.is_finite()) {
        return Err(StlError::numerical("non-finite eigenpair"));
    }

    let w = normalize_columns(w, &hk, eps);
    let values = rayleigh_quotients(&w, u.as_ref(), &hk, cfg.lambda, eps, &values);
    Ok(TransformMatrix {
        w: to_nd(w.as_ref()),
        eigenvalues: values,
        n_source: l.n_source(),
        eps,
    })
}

fn krylov_route(k: &Mat<f64>, u: MatRef<'_, f64>, lambda: f64, eps: f64, m: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    if !(lambda > 0.0) {
        return Err(StlError::invalid("the Krylov route needs lambda > 0"));
    }
    let n = k.nrows();
    let a = ShiftedLowRank::new(lambda, u)?;
    // M = A^{-1/2} (KHK + εI) A^{-1/2}; its largest θ are 1/φ for the smallest φ
    let op = |x: MatRef<'_, f64>| {
        let y = a.pow_apply(-0.5, x);
        let mut ky = k * &y;
        center_columns(&mut ky);
        let bx = k * &ky + &y * faer::Scale(eps);
        a.pow_apply(-0.5, bx.as_ref())
    };
    let (theta, y) = largest_eigenpairs(n, m, op, KrylovOptions::for_size(n, m))?;
    if theta.iter().any(|&t| !(t > 0.0)) {
        return Err(StlError::numerical("non-positive Rayleigh quotient in Krylov route"));
    }
    let values = theta.iter().map(|t| 1.0 / t).collect();
    Ok((values, a.pow_apply(-0.5, y.as_ref())))
}

/// `φ_j = (‖Uᵀw‖² + λ‖w‖²) / (‖HKw‖² + ε‖w‖²)`: nonnegative by construction
/// and accurate to the square of the eigenvector error. Falls back to the
/// solver's value where the denominator vanishes.
fn rayleigh_quotients(w: &Mat<f64>, u: MatRef<'_, f64>, hk: &Mat<f64>, lambda: f64, eps: f64, solver: &[f64]) -> Vec<f64> {
    let utw = u.transpose() * w;
    let hkw = hk * w;
    (0..w.ncols())
        .map(|j| {
            let ww = w.col(j).squared_norm_l2();
            let den = hkw.col(j).squared_norm_l2() + eps * ww;
            if den > 0.0 {
                (utw.col(j).squared_norm_l2() + lambda * ww) / den
            } else {
                solver[j]
            }
        })
        .collect()
}

/// Scales each column to `wᵀ KHK w = 1` (or unit length when that form is
/// below ε) and makes its first nonzero coordinate positive.
fn normalize_columns(mut w: Mat<f64>, hk: &Mat<f64>, eps: f64) -> Mat<f64> {
    let hkw = hk * &w;
    for j in 0..w.ncols() {
        let q = hkw.col(j).squared_norm_l2();
        let scale = if q > eps { q.sqrt() } else { w.col(j).norm_l2() };
        let n = w.nrows();
        if scale > 0.0 {
            for i in 0..n {
                w[(i, j)] /= scale;
            }
        }
        let peak = (0..n).fold(0.0f64, |a, i| a.max(w[(i, j)].abs()));
        let first = (0..n).map(|i| w[(i, j)]).find(|v| v.abs() > 1e-12 * peak).unwrap_or(0.0);
        if first < 0.0 {
            for i in 0..n {
                w[(i, j)] = -w[(i, j)];
            }
        }
    }
    w
}

/// Global-shift baseline: one L over whole domains, no class structure.
pub fn solve_global_transform(
    k: &KernelMatrix,
    h: &CenteringMatrix,
    n_source: usize,
    cfg: &TransferConfig,
) -> Result<TransformMatrix> {
    if n_source == 0 || n_source >= k.n() {
        return Err(StlError::invalid("global transform needs both domains nonempty"));
    }
    let l = IntraClassMMDMatrix::global(n_source, k.n() - n_source);
    solve_stl_transform(k, &l, h, cfg)
}

/// Maps the stacked samples into the learned subspace: `Z = Wᵀ K`.
pub fn project(k: &KernelMatrix, w: &TransformMatrix) -> Result<TransformedData> {
    if w.w.nrows() != k.n() {
        return Err(StlError::invalid(format!(
            "W has {} rows but K is {}x{}",
            w.w.nrows(),
            k.n(),
            k.n()
        )));
    }
    let z = to_faer(w.w.t()) * to_faer(k.entries());
    Ok(TransformedData {
        z: to_nd(z.as_ref()),
        n_source: w.n_source,
    })
}

/// `Σ_c tr(Wᵀ K L_c K W)`: the intra-class MMD in the learned subspace.
pub fn transfer_objective(k: &KernelMatrix, l: &IntraClassMMDMatrix, w: ArrayView2<'_, f64>) -> f64 {
    let kw = k.entries().dot(&w);
    let e = l.factor_matrix();
    let proj = e.t().dot(&kw);
    proj.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use crate::mmd::centering;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n1: usize, n2: usize, d: usize, c: usize, seed: u64) -> (KernelMatrix, IntraClassMMDMatrix, CenteringMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n1 + n2, d), |_| rng.random_range(-2.0..2.0));
        let ys: Vec<usize> = (0..n1).map(|_| rng.random_range(0..c)).collect();
        let yt: Vec<usize> = (0..n2).map(|_| rng.random_range(0..c)).collect();
        let k = gram(x.view(), KernelSpec::default()).unwrap();
        (k, IntraClassMMDMatrix::new(&ys, &yt, c), centering(n1 + n2).unwrap())
    }

    fn dense(k: &KernelMatrix, l: &IntraClassMMDMatrix, h: &CenteringMatrix) -> (Array2<f64>, Array2<f64>) {
        let kk = k.entries();
        let a = kk.dot(&l.summed()).dot(&kk);
        let b = kk.dot(&h.entries()).dot(&kk);
        (a, b)
    }

    /// `‖A W − (KHK + εI) W Φ‖_F / ‖W‖_F`
    fn pencil_residual(k: &KernelMatrix, l: &IntraClassMMDMatrix, h: &CenteringMatrix, t: &TransformMatrix, lambda: f64) -> f64 {
        let n = k.n();
        let (mut a, b) = dense(k, l, h);
        a += &(Array2::<f64>::eye(n) * lambda);
        let w = t.w();
        let phi = Array2::from_diag(&ndarray::Array1::from(t.eigenvalues().to_vec()));
        let b_reg = &b + &(Array2::<f64>::eye(n) * t.eps());
        let r = a.dot(&w) - b_reg.dot(&w).dot(&phi);
        r.iter().map(|v| v * v).sum::<f64>().sqrt() / w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn constraint_and_residual() {
        let (k, l, h) = random_problem(12, 8, 3, 2, 1);
        let cfg = TransferConfig { dim: 4, ..Default::default() };
        let t = solve_stl_transform(&k, &l, &h, &cfg).unwrap();
        let (_, b) = dense(&k, &l, &h);
        let w = t.w();
        let g = w.t().dot(&b).dot(&w);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-6, "{g:?}");
            }
        }
        let rel = pencil_residual(&k, &l, &h, &t, cfg.lambda);
        assert!(rel < 1e-6, "residual {rel}");
        assert!(t.eigenvalues().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn errors() {
        let (k, l, h) = random_problem(3, 2, 2, 2, 3);
        let cfg = TransferConfig { dim: 6, ..Default::default() };
        assert!(matches!(solve_stl_transform(&k, &l, &h, &cfg), Err(StlError::InvalidInput(_))));
        let cfg = TransferConfig { dim: 0, ..Default::default() };
        assert!(solve_stl_transform(&k, &l, &h, &cfg).is_err());
        let cfg = TransferConfig { lambda: -1.0, ..Default::default() };
        assert!(solve_stl_transform(&k, &l, &h, &cfg).is_err());
        let wrong_h = centering(4).unwrap();
        assert!(solve_stl_transform(&k, &l, &wrong_h, &TransferConfig { dim: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn deterministic_and_sign_convention() {
        let (k, l, h) = random_problem(10, 10, 2, 3, 5);
        let cfg = TransferConfig { dim: 3, ..Default::default() };
        let a = solve_stl_transform(&k, &l, &h, &cfg).unwrap();
        let b = solve_stl_transform(&k, &l, &h, &cfg).unwrap();
        assert_eq!(a, b);
        for col in a.w().columns() {
            let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = col.iter().find(|v| v.abs() > 1e-12 * peak).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn krylov_route_matches_dense_route() {
        let (k, l, h) = random_problem(90, 70, 4, 3, 11);
        let base = TransferConfig { dim: 5, lambda: 0.5, eps: None, route: SolverRoute::Dense };
        let dense_t = solve_stl_transform(&k, &l, &h, &base).unwrap();
        let kry = solve_stl_transform(&k, &l, &h, &TransferConfig { route: SolverRoute::Krylov, ..base }).unwrap();
        for (a, b) in dense_t.eigenvalues().iter().zip(kry.eigenvalues()) {
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
        let rd = pencil_residual(&k, &l, &h, &dense_t, 0.5);
        let rk = pencil_residual(&k, &l, &h, &kry, 0.5);
        assert!(rd < 1e-6 && rk < 1e-6, "residuals {rd:e} {rk:e}");
        // the ε-regularized right-hand side is ill-conditioned, so vectors agree less tightly than values
        let diff = (&dense_t.w() - &kry.w()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = dense_t.w().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-4 * scale, "max W difference {diff} (scale {scale})");
    }

    #[test]
    fn global_single_class_collapse() {
        let (k, _, h) = random_problem(6, 5, 2, 1, 9);
        let cfg = TransferConfig { dim: 2, ..Default::default() };
        let l = IntraClassMMDMatrix::new(&[0; 6], &[0; 5], 1);
        let a = solve_stl_transform(&k, &l, &h, &cfg).unwrap();
        let b = solve_global_transform(&k, &h, 6, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn project_examples() {
        let k = KernelMatrix::from_matrix(array![[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]).unwrap();
        let sel = TransformMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], vec![0.0, 0.0], 2).unwrap();
        let z = project(&k, &sel).unwrap();
        assert_eq!(z.z(), k.entries().slice(ndarray::s![0..2, ..]));

        let eye = KernelMatrix::from_matrix(Array2::eye(3)).unwrap();
        let w = TransformMatrix::new(array![[1.0], [2.0], [3.0]], vec![0.0], 1).unwrap();
        assert_eq!(project(&eye, &w).unwrap().z(), array![[1.0, 2.0, 3.0]]);

        let zero = KernelMatrix::from_matrix(Array2::zeros((3, 3))).unwrap();
        assert!(project(&zero, &w).unwrap().z().iter().all(|&v| v == 0.0));

        let bad = KernelMatrix::from_matrix(Array2::eye(4)).unwrap();
        assert!(project(&bad, &w).is_err());
        assert_eq!(z.source_rows().dim(), (2, 2));
        assert_eq!(z.candidate_rows().dim(), (1, 2));
    }
}
