//! Maximum mean discrepancy and the matrices that express it as a quadratic form.
//!
//! Every matrix here indexes a stacked sample set: rows `0..n1` are source
//! samples and rows `n1..n1 + n2` are candidates.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::data::{stack_rows, LabeledDataset};
use crate::error::{Result, StlError};
use crate::kernel::{gram, KernelSpec};

/// Squared distance between the kernel mean embeddings of `xs` and `xt`.
///
/// A median bandwidth is resolved on the union of both sets.
pub fn mmd_distance(xs: ArrayView2<'_, f64>, xt: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<f64> {
    if xs.nrows() == 0 || xt.nrows() == 0 {
        return Err(StlError::empty("mmd needs two nonempty sample sets"));
    }
    let stacked = stack_rows(xs, xt)?;
    let k = gram(stacked.view(), spec)?;
    Ok(mmd_from_gram(k.entries(), xs.nrows()))
}

/// MMD between rows `0..n1` and `n1..` of an already built Gram matrix.
fn mmd_from_gram(k: ArrayView2<'_, f64>, n1: usize) -> f64 {
    let n = k.nrows();
    let n2 = n - n1;
    let ss = k.slice(s![..n1, ..n1]).sum() / (n1 * n1) as f64;
    let st = k.slice(s![..n1, n1..]).sum() / (n1 * n2) as f64;
    let tt = k.slice(s![n1.., n1..]).sum() / (n2 * n2) as f64;
    clamp_nonnegative(ss - 2.0 * st + tt)
}

fn clamp_nonnegative(v: f64) -> f64 {
    if v < 0.0 {
        if v < -1e-12 {
            log::debug!("clamping negative mmd {v:e}");
        }
        0.0
    } else {
        v
    }
}

/// Sum over classes of the MMD between same-class source and candidate rows.
///
/// Classes missing on either side contribute 0. A median bandwidth is resolved
/// once on all stacked samples so every class shares one kernel.
pub fn intra_class_mmd(src: &LabeledDataset, can: &LabeledDataset, spec: KernelSpec) -> Result<f64> {
    let stacked = stack_rows(src.x(), can.x())?;
    let spec = spec.resolve(stacked.view())?;
    let n_classes = src.n_classes().max(can.n_classes());
    let mut total = 0.0;
    for c in 0..n_classes {
        let a = src.class_rows(c);
        let b = can.class_rows(c);
        if a.nrows() > 0 && b.nrows() > 0 {
            total += mmd_distance(a.view(), b.view(), spec)?;
        }
    }
    Ok(total)
}

/// Per-class MMD matrices `L_c` over a stacked source + candidate index set.
///
/// Each `L_c` is stored as the vector `e_c` with `L_c = e_c e_cᵀ`, where
/// `e_c` is `1/n1_c` on source rows of class c, `-1/n2_c` on candidate rows of
/// class c, and 0 elsewhere. Dense matrices are materialized on request.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraClassMMDMatrix {
    n_source: usize,
    n_candidate: usize,
    factors: Vec<Array1<f64>>,
    class_counts: Vec<(usize, usize)>,
}

impl IntraClassMMDMatrix {
    pub fn new(labels_src: &[usize], labels_can: &[usize], n_classes: usize) -> Self {
        let n1 = labels_src.len();
        let n = n1 + labels_can.len();
        let mut factors = Vec::with_capacity(n_classes);
        let mut class_counts = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let ns = labels_src.iter().filter(|&&l| l == c).count();
            let nt = labels_can.iter().filter(|&&l| l == c).count();
            let mut e = Array1::zeros(n);
            if ns > 0 && nt > 0 {
                for (i, _) in labels_src.iter().enumerate().filter(|(_, &l)| l == c) {
                    e[i] = 1.0 / ns as f64;
                }
                for (j, _) in labels_can.iter().enumerate().filter(|(_, &l)| l == c) {
                    e[n1 + j] = -1.0 / nt as f64;
                }
            }
            factors.push(e);
            class_counts.push((ns, nt));
        }
        Self {
            n_source: n1,
            n_candidate: labels_can.len(),
            factors,
            class_counts,
        }
    }

    /// Single-class matrix over whole domains: the global-shift objective.
    pub fn global(n_source: usize, n_candidate: usize) -> Self {
        Self::new(&vec![0; n_source], &vec![0; n_candidate], 1)
    }

    pub fn n(&self) -> usize {
        self.n_source + self.n_candidate
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_classes(&self) -> usize {
        self.factors.len()
    }

    /// (source count, candidate count) for each class.
    pub fn class_counts(&self) -> &[(usize, usize)] {
        &self.class_counts
    }

    /// The vector `e_c` with `L_c = e_c e_cᵀ`.
    pub fn factor(&self, c: usize) -> ArrayView1<'_, f64> {
        self.factors[c].view()
    }

    /// Factors as columns of an n x C matrix, so that `Σ_c L_c = E Eᵀ`.
    pub fn factor_matrix(&self) -> Array2<f64> {
        let mut e = Array2::zeros((self.n(), self.n_classes()));
        for (c, f) in self.factors.iter().enumerate() {
            e.column_mut(c).assign(f);
        }
        e
    }

    /// Dense `L_c`.
    pub fn per_class(&self, c: usize) -> Array2<f64> {
        outer(self.factor(c))
    }

    /// Dense `Σ_c L_c`.
    pub fn summed(&self) -> Array2<f64> {
        let e = self.factor_matrix();
        e.dot(&e.t())
    }

    /// `Σ_c vᵀ L_c v` for a vector over the stacked index set.
    pub fn quadratic_form(&self, v: ArrayView1<'_, f64>) -> f64 {
        self.factors.iter().map(|e| e.dot(&v).powi(2)).sum()
    }

    /// `tr(K Σ_c L_c)`: the intra-class MMD measured by the Gram matrix `k`.
    pub fn trace_with(&self, k: ArrayView2<'_, f64>) -> f64 {
        let total: f64 = self.factors.iter().map(|e| e.dot(&k.dot(e))).sum();
        clamp_nonnegative(total)
    }
}

fn outer(e: ArrayView1<'_, f64>) -> Array2<f64> {
    let n = e.len();
    Array2::from_shape_fn((n, n), |(i, j)| e[i] * e[j])
}

/// Dense `L_c` for class `c` over `labels_src` followed by `labels_can`.
pub fn build_lc(labels_src: &[usize], labels_can: &[usize], c: usize) -> Array2<f64> {
    let n1 = labels_src.len();
    let n = n1 + labels_can.len();
    let ns = labels_src.iter().filter(|&&l| l == c).count();
    let nt = labels_can.iter().filter(|&&l| l == c).count();
    let mut l = Array2::zeros((n, n));
    if ns == 0 || nt == 0 {
        return l;
    }
    let (ns, nt) = (ns as f64, nt as f64);
    let member = |i: usize| {
        if i < n1 {
            (labels_src[i] == c).then_some(true)
        } else {
            (labels_can[i - n1] == c).then_some(false)
        }
    };
    for i in 0..n {
        for j in 0..n {
            l[[i, j]] = match (member(i), member(j)) {
                (Some(true), Some(true)) => 1.0 / (ns * ns),
                (Some(false), Some(false)) => 1.0 / (nt * nt),
                (Some(_), Some(_)) => -1.0 / (ns * nt),
                _ => 0.0,
            };
        }
    }
    l
}

/// `H = I - (1/n) 11ᵀ`, kept implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CenteringMatrix {
    n: usize,
}

impl CenteringMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> Array2<f64> {
        let n = self.n;
        let off = -1.0 / n as f64;
        Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 + off } else { off })
    }

    /// `H x`: subtracts the mean of each column.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mean = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
        &x - &mean
    }
}

pub fn centering(n: usize) -> Result<CenteringMatrix> {
    if n == 0 {
        return Err(StlError::invalid("centering matrix needs n >= 1"));
    }
    Ok(CenteringMatrix { n })
}
