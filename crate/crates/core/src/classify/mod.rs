//! Base classifiers, the final classifier, and majority voting.

mod tree;
mod vote;

pub use tree::{DecisionTree, ForestParams, RandomForest, TreeParams};
pub use vote::{majority_vote, split_by_vote, PseudoSplit};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Result, StlError};
use tree::argmax_lowest;

/// An untrained classifier and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassifierModel {
    Knn { k: usize },
    NearestCentroid,
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
}

impl ClassifierModel {
    /// kNN (k = 3), nearest centroid, and a 30-tree forest.
    pub fn default_base(seed: u64) -> Vec<ClassifierModel> {
        vec![
            ClassifierModel::Knn { k: 3 },
            ClassifierModel::NearestCentroid,
            ClassifierModel::RandomForest(ForestParams {
                seed,
                ..ForestParams::default()
            }),
        ]
    }

    /// 30-tree random forest.
    pub fn default_final(seed: u64) -> ClassifierModel {
        ClassifierModel::RandomForest(ForestParams {
            seed,
            ..ForestParams::default()
        })
    }

    /// Same model with its random seed replaced; seedless models are unchanged.
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            ClassifierModel::DecisionTree(p) => ClassifierModel::DecisionTree(TreeParams { seed, ..p }),
            ClassifierModel::RandomForest(p) => ClassifierModel::RandomForest(ForestParams { seed, ..p }),
            other => other,
        }
    }

    pub fn fit(&self, data: &LabeledDataset) -> Result<TrainedModel> {
        fit(self, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Knn { k: usize, x: Array2<f64>, y: Vec<usize> },
    Centroid { centroids: Vec<(usize, Vec<f64>)> },
    Tree(DecisionTree),
    Forest(RandomForest),
}

/// A fitted classifier; immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    inner: Inner,
    dim: usize,
    n_classes: usize,
}

pub fn fit(model: &ClassifierModel, data: &LabeledDataset) -> Result<TrainedModel> {
    let x = data.x();
    let y = data.y();
    let n_classes = data.n_classes();
    let inner = match *model {
        ClassifierModel::Knn { k } => {
            if k == 0 || k > data.len() {
                return Err(StlError::invalid(format!("k = {k} with {} training samples", data.len())));
            }
            Inner::Knn {
                k,
                x: x.to_owned(),
                y: y.to_vec(),
            }
        }
        ClassifierModel::NearestCentroid => {
            let centroids = (0..n_classes)
                .filter_map(|c| {
                    let rows = data.class_rows(c);
                    rows.mean_axis(Axis(0)).map(|m| (c, m.to_vec()))
                })
                .collect();
            Inner::Centroid { centroids }
        }
        ClassifierModel::DecisionTree(p) => Inner::Tree(DecisionTree::fit(x, y, n_classes, p)),
        ClassifierModel::RandomForest(p) => {
            if p.n_trees == 0 {
                return Err(StlError::invalid("forest needs at least one tree"));
            }
            Inner::Forest(RandomForest::fit(x, y, n_classes, p))
        }
    };
    Ok(TrainedModel {
        inner,
        dim: data.dim(),
        n_classes,
    })
}

fn sq_dist(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        predict(self, x)
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> usize {
        match &self.inner {
            Inner::Knn { k, x, y } => {
                let row = row.to_vec();
                let mut d: Vec<(f64, usize)> = x
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| (sq_dist(r, &row), i))
                    .collect();
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![0usize; self.n_classes];
                for &(_, i) in &d[..*k] {
                    votes[y[i]] += 1;
                }
                argmax_lowest(&votes)
            }
            Inner::Centroid { centroids } => {
                centroids
                    .iter()
                    .map(|(c, m)| (sq_dist(row, m), *c))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, c)| c)
                    .expect("at least one class")
            }
            Inner::Tree(t) => t.predict_row(row),
            Inner::Forest(f) => f.predict_row(row),
        }
    }
}

pub fn predict(model: &TrainedModel, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if x.nrows() > 0 && x.ncols() != model.dim {
        return Err(StlError::invalid(format!(
            "query has {} features, model was trained on {}",
            x.ncols(),
            model.dim
        )));
    }
    Ok((0..x.nrows())
        .into_par_iter()
        .map(|i| model.predict_row(x.row(i)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn one_nn() {
        let ds = LabeledDataset::new(array![[0.0, 0.0], [1.0, 1.0]], vec![0, 1]).unwrap();
        let m = fit(&ClassifierModel::Knn { k: 1 }, &ds).unwrap();
        assert_eq!(m.predict(array![[0.1, 0.0]].view()).unwrap(), vec![0]);
        assert!(fit(&ClassifierModel::Knn { k: 3 }, &ds).is_err());
    }

    #[test]
    fn centroid_singletons_match_one_nn() {
        let ds = LabeledDataset::new(array![[0.0, 0.0], [2.0, 1.0], [-1.0, 3.0]], vec![2, 0, 1]).unwrap();
        let nc = fit(&ClassifierModel::NearestCentroid, &ds).unwrap();
        let nn = fit(&ClassifierModel::Knn { k: 1 }, &ds).unwrap();
        let q = Array2::from_shape_fn((25, 2), |(i, j)| (i as f64 * 0.37 + j as f64 * 1.3).sin() * 3.0);
        assert_eq!(nc.predict(q.view()).unwrap(), nn.predict(q.view()).unwrap());
    }

    #[test]
    fn ties_go_to_lowest_label() {
        let ds = LabeledDataset::new(array![[1.0], [-1.0]], vec![1, 0]).unwrap();
        let knn = fit(&ClassifierModel::Knn { k: 2 }, &ds).unwrap();
        assert_eq!(knn.predict(array![[0.0]].view()).unwrap(), vec![0]);
        let nc = fit(&ClassifierModel::NearestCentroid, &ds).unwrap();
        assert_eq!(nc.predict(array![[0.0]].view()).unwrap(), vec![0]);
    }

    #[test]
    fn empty_query_and_dim_mismatch() {
        let ds = LabeledDataset::new(array![[0.0, 0.0], [1.0, 1.0]], vec![0, 1]).unwrap();
        let m = fit(&ClassifierModel::NearestCentroid, &ds).unwrap();
        assert!(m.predict(Array2::zeros((0, 2)).view()).unwrap().is_empty());
        assert!(matches!(m.predict(array![[1.0]].view()), Err(StlError::InvalidInput(_))));
    }

    #[test]
    fn forest_fits_separable_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100;
        let x = Array2::from_shape_fn((2 * n, 2), |(i, _)| {
            let center = if i < n { -3.0 } else { 3.0 };
            center + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let y: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();
        let ds = LabeledDataset::new(x.clone(), y.clone()).unwrap();
        let m = fit(&ClassifierModel::default_final(1), &ds).unwrap();
        let pred = m.predict(x.view()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
        let again = fit(&ClassifierModel::default_final(1), &ds).unwrap();
        assert_eq!(again.predict(x.view()).unwrap(), pred);
    }
}
