//! Gram matrices over stacked sample sets.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StlError};

/// RBF bandwidth: fixed, or the median pairwise distance of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelSpec {
    Linear,
    Rbf { bandwidth: Bandwidth },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    /// Replaces a median sentinel with the bandwidth measured on `samples`.
    pub fn resolve(self, samples: ArrayView2<'_, f64>) -> Result<Self> {
        match self {
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Median,
            } => Ok(KernelSpec::rbf(median_bandwidth(samples)?)),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } if !(s > 0.0 && s.is_finite()) => {
                Err(StlError::invalid(format!("rbf bandwidth must be positive, got {s}")))
            }
            other => Ok(other),
        }
    }

    /// Kernel value between two rows. Panics on an unresolved median bandwidth.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed(s),
            } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * s * s)).exp()
            }
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Median,
            } => panic!("median bandwidth must be resolved before evaluation"),
        }
    }
}

/// Symmetric n x n Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Array2<f64>,
}

impl KernelMatrix {
    /// Wraps a precomputed square matrix without checking semidefiniteness.
    pub fn from_matrix(entries: Array2<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(StlError::invalid("kernel matrix must be square"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// Gram matrix of `samples` (rows) under `spec`.
///
/// A median bandwidth is resolved on `samples` first.
pub fn gram(samples: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<KernelMatrix> {
    if samples.nrows() == 0 {
        return Err(StlError::empty("no samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StlError::invalid("non-finite sample value"));
    }
    let spec = spec.resolve(samples)?;
    let inner = samples.dot(&samples.t());
    let entries = match spec {
        KernelSpec::Linear => symmetrize(inner),
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed(s),
        } => {
            let sq = inner.diag().to_owned();
            let denom = 2.0 * s * s;
            let n = samples.nrows();
            let mut k = inner;
            for i in 0..n {
                k[[i, i]] = 1.0;
                for j in 0..i {
                    let d2 = (sq[i] + sq[j] - 2.0 * k[[i, j]]).max(0.0);
                    let v = (-d2 / denom).exp();
                    k[[i, j]] = v;
                    k[[j, i]] = v;
                }
            }
            k
        }
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Median,
        } => unreachable!("resolved above"),
    };
    Ok(KernelMatrix { entries })
}

/// Cross-kernel between the rows of `a` and the rows of `b`.
pub fn cross_gram(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, spec: KernelSpec) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.axis_iter(Axis(0)).enumerate() {
        let ra = ra.to_vec();
        for (j, rb) in b.axis_iter(Axis(0)).enumerate() {
            out[[i, j]] = spec.eval(&ra, &rb.to_vec());
        }
    }
    out
}

fn symmetrize(mut k: Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    for i in 0..n {
        for j in 0..i {
            k[[j, i]] = k[[i, j]];
        }
    }
    k
}

/// Median of all pairwise Euclidean distances (i < j).
pub fn median_bandwidth(samples: ArrayView2<'_, f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(StlError::invalid("median bandwidth needs at least 2 samples"));
    }
    let sq: Vec<f64> = samples.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let inner = samples.dot(&samples.t());
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            d.push((sq[i] + sq[j] - 2.0 * inner[[i, j]]).max(0.0).sqrt());
        }
    }
    let median = median_in_place(&mut d);
    if !(median > 0.0) {
        // more than half the pairs coincide; fall back to the mean nonzero distance
        let nonzero: Vec<f64> = d.iter().copied().filter(|&x| x > 0.0).collect();
        if nonzero.is_empty() {
            return Err(StlError::DegenerateInput("all samples are identical".into()));
        }
        return Ok(nonzero.iter().sum::<f64>() / nonzero.len() as f64);
    }
    Ok(median)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}
