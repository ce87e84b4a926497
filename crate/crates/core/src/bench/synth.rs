use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::LabeledDataset;
use crate::error::{Result, StlError};

/// Distance between neighbouring class means on the grid.
pub const GRID_SPACING: f64 = 5.0;

/// Mean of class `c`: a point on a square grid spanning the first two axes.
pub fn grid_mean(c: usize, classes: usize, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    if dim == 1 {
        m[0] = GRID_SPACING * c as f64;
        return m;
    }
    let side = (classes as f64).sqrt().ceil() as usize;
    m[0] = GRID_SPACING * (c % side) as f64;
    m[1] = GRID_SPACING * (c / side) as f64;
    m
}

/// Gaussian blobs with unit covariance, source and shifted target.
///
/// Target rows of class `c` are `mean_c + shift + scale * noise`. Rows come
/// grouped by class, `per_class` of each; the target's labels are its truth.
/// A `shift` shorter than `dim` is padded with zeros.
pub fn synth_shift(
    classes: usize,
    per_class: usize,
    dim: usize,
    shift: &[f64],
    scale: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if classes < 2 || per_class < 2 || dim == 0 {
        return Err(StlError::invalid(format!(
            "need classes >= 2, per_class >= 2, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    if shift.len() > dim {
        return Err(StlError::invalid(format!("shift has {} entries for dim {dim}", shift.len())));
    }
    if !scale.is_finite() || scale <= 0.0 || shift.iter().any(|s| !s.is_finite()) {
        return Err(StlError::invalid("shift and scale must be finite, scale positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let y: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let means: Vec<Vec<f64>> = (0..classes).map(|c| grid_mean(c, classes, dim)).collect();
    let mut draw = |offset: &dyn Fn(usize) -> f64, s: f64| {
        let mut x = Array2::zeros((n, dim));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = means[y[i]][j] + offset(j) + s * z;
            }
        }
        x
    };
    let xs = draw(&|_| 0.0, 1.0);
    let xt = draw(&|j| shift.get(j).copied().unwrap_or(0.0), scale);
    Ok((
        LabeledDataset::with_classes(xs, y.clone(), classes)?,
        LabeledDataset::with_classes(xt, y, classes)?,
    ))
}
