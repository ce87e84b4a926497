//! Source and target datasets.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Result, StlError};

/// Feature matrix with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Array2<f64>,
    y: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    /// Builds a dataset, inferring the class count as `max(y) + 1`.
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(x, y, n_classes)
    }

    pub fn with_classes(x: Array2<f64>, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        check_matrix(&x.view())?;
        if x.nrows() != y.len() {
            return Err(StlError::invalid(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(StlError::invalid(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows whose label equals `class`, in original order.
    pub fn class_rows(&self, class: usize) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == class).collect();
        self.x.select(Axis(0), &idx)
    }

    /// Drops the labels.
    pub fn unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset { x: self.x.clone() }
    }

    /// Reorders rows (and labels) by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), order),
            y: order.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.x, self.y)
    }
}

/// Feature matrix without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    x: Array2<f64>,
}

impl UnlabeledDataset {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        check_matrix(&x.view())?;
        Ok(Self { x })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), order),
        }
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.x
    }
}

fn check_matrix(x: &ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(StlError::empty("dataset has no rows"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StlError::invalid("non-finite feature value"));
    }
    Ok(())
}

/// Stacks rows of `top` above rows of `bottom`.
pub(crate) fn stack_rows(top: ArrayView2<'_, f64>, bottom: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if top.ncols() != bottom.ncols() {
        return Err(StlError::invalid(format!(
            "dimension mismatch: {} vs {}",
            top.ncols(),
            bottom.ncols()
        )));
    }
    Ok(ndarray::concatenate(Axis(0), &[top, bottom]).expect("column counts checked"))
}
