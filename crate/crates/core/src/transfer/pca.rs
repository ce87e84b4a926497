use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Result, StlError};
use crate::linalg::{sym_eigen, to_faer};

/// Principal component projection fitted on one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Array1<f64>,
    /// d x m, columns are components by decreasing variance.
    components: Array2<f64>,
    explained: Vec<f64>,
    total_variance: f64,
}

impl Pca {
    pub fn fit(x: ArrayView2<'_, f64>, m: usize) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 {
            return Err(StlError::empty("pca needs samples"));
        }
        if m == 0 || m > d {
            return Err(StlError::invalid(format!("cannot keep {m} of {d} components")));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / n as f64;
        let (values, vectors) = sym_eigen(to_faer(cov.view()).as_ref())?;
        let mut components = Array2::zeros((d, m));
        let mut explained = Vec::with_capacity(m);
        for j in 0..m {
            let src = d - 1 - j;
            let mut col: Vec<f64> = (0..d).map(|i| vectors[(i, src)]).collect();
            let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if col.iter().find(|v| v.abs() > 1e-12 * peak).is_some_and(|&v| v < 0.0) {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            components.column_mut(j).assign(&Array1::from(col));
            explained.push(values[src].max(0.0));
        }
        Ok(Self {
            mean,
            components,
            explained,
            total_variance: values.iter().map(|v| v.max(0.0)).sum(),
        })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(StlError::invalid("pca dimension mismatch"));
        }
        Ok((&x - &self.mean).dot(&self.components))
    }

    pub fn components(&self) -> ArrayView2<'_, f64> {
        self.components.view()
    }

    /// Variance captured by the kept components over total variance.
    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.explained.iter().sum::<f64>() / self.total_variance
        } else {
            0.0
        }
    }
}

/// Projects mean-centered `x` onto its top `m` principal components.
pub fn pca_baseline(x: ArrayView2<'_, f64>, m: usize) -> Result<Array2<f64>> {
    Pca::fit(x, m)?.transform(x)
}
