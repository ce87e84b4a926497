//! The full stratified transfer loop: vote, transfer, re-annotate, repeat.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::bench::accuracy;
use crate::classify::{fit, majority_vote, split_by_vote, ClassifierModel, PseudoSplit};
use crate::data::{stack_rows, LabeledDataset, UnlabeledDataset};
use crate::error::{Result, StlError};
use crate::kernel::{gram, KernelMatrix, KernelSpec};
use crate::mmd::{centering, IntraClassMMDMatrix};
use crate::transfer::{project, solve_stl_transform, TransferConfig, TransformedData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlConfig {
    pub transfer: TransferConfig,
    pub kernel: KernelSpec,
    pub base_classifiers: Vec<ClassifierModel>,
    pub final_classifier: ClassifierModel,
    /// Iteration cap T.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

impl StlConfig {
    /// Default settings with every classifier seeded from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            transfer: TransferConfig::default(),
            kernel: KernelSpec::default(),
            base_classifiers: ClassifierModel::default_base(seed),
            final_classifier: ClassifierModel::default_final(seed),
            max_iterations: 10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(StlError::invalid("at least one iteration is required"));
        }
        if self.base_classifiers.is_empty() {
            return Err(StlError::invalid("at least one base classifier is required"));
        }
        Ok(())
    }
}

/// Diagnostics of one transfer/annotation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Intra-class MMD of the labels entering the solve, measured by the kernel.
    pub intra_class_mmd: f64,
    /// Target labels that differ from the previous round (votes in round 1).
    pub changed: usize,
    pub n_candidates: usize,
    pub candidate_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlResult {
    pub y_t: Vec<usize>,
    pub per_iteration: Vec<IterationRecord>,
    /// Voting produced no candidates; labels come from a source-only classifier.
    pub fallback_source_only: bool,
    /// Stopped because no label changed, before the iteration cap.
    pub converged: bool,
}

/// Every target sample becomes a candidate carrying its current label.
pub fn refresh_candidates(labels: &[usize]) -> PseudoSplit {
    PseudoSplit {
        can_idx: (0..labels.len()).collect(),
        y_can: labels.to_vec(),
        res_idx: Vec::new(),
    }
}

/// Relabels candidates in the learned subspace, then residuals from the
/// relabeled candidates in the original feature space.
pub fn second_annotation(
    z: &TransformedData,
    y_src: &[usize],
    x_can_raw: ArrayView2<'_, f64>,
    x_res_raw: ArrayView2<'_, f64>,
    model: &ClassifierModel,
    n_classes: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if y_src.len() != z.n_source() {
        return Err(StlError::invalid("source labels do not match the transformed split"));
    }
    let src = LabeledDataset::with_classes(z.source_rows(), y_src.to_vec(), n_classes)?;
    let y_can = fit_capped(model, &src)?.predict(z.candidate_rows().view())?;
    if x_res_raw.nrows() == 0 {
        return Ok((y_can, Vec::new()));
    }
    let can = LabeledDataset::with_classes(x_can_raw.to_owned(), y_can.clone(), n_classes)?;
    let y_res = fit_capped(model, &can)?.predict(x_res_raw)?;
    Ok((y_can, y_res))
}

/// Fits `model`, shrinking kNN's k to the training set size.
fn fit_capped(model: &ClassifierModel, data: &LabeledDataset) -> Result<crate::classify::TrainedModel> {
    match *model {
        ClassifierModel::Knn { k } if k > data.len() => fit(&ClassifierModel::Knn { k: data.len() }, data),
        _ => fit(model, data),
    }
}

pub fn run_stl(src: &LabeledDataset, tgt: &UnlabeledDataset, cfg: &StlConfig) -> Result<StlResult> {
    run_stl_with_truth(src, tgt, cfg, None)
}

/// [`run_stl`], additionally scoring candidates against known target labels.
pub fn run_stl_with_truth(
    src: &LabeledDataset,
    tgt: &UnlabeledDataset,
    cfg: &StlConfig,
    truth: Option<&[usize]>,
) -> Result<StlResult> {
    cfg.validate()?;
    if src.dim() != tgt.dim() {
        return Err(StlError::invalid(format!(
            "source has {} features, target has {}",
            src.dim(),
            tgt.dim()
        )));
    }
    if truth.is_some_and(|t| t.len() != tgt.len()) {
        return Err(StlError::invalid("truth length differs from target size"));
    }
    let n_classes = src.n_classes();
    let distinct = (0..n_classes).filter(|&c| src.y().contains(&c)).count();
    if distinct < 2 {
        let y_t = fit(&cfg.final_classifier, src)?.predict(tgt.x())?;
        return Ok(StlResult {
            y_t,
            per_iteration: Vec::new(),
            fallback_source_only: true,
            converged: true,
        });
    }

    let mut predictions = Vec::with_capacity(cfg.base_classifiers.len());
    for model in &cfg.base_classifiers {
        predictions.push(fit_capped(model, src)?.predict(tgt.x())?);
    }
    let votes = majority_vote(&predictions);
    let mut split = split_by_vote(tgt, &votes);
    if split.is_empty() {
        log::warn!("majority voting produced no candidates; falling back to source-only labels");
        let y_t = fit(&cfg.final_classifier, src)?.predict(tgt.x())?;
        return Ok(StlResult {
            y_t,
            per_iteration: Vec::new(),
            fallback_source_only: true,
            converged: false,
        });
    }

    let mut previous = votes;
    let mut records = Vec::new();
    let mut cached: Option<(Vec<usize>, KernelMatrix)> = None;
    let mut y_t = vec![0usize; tgt.len()];
    let mut converged = false;

    for it in 1..=cfg.max_iterations {
        let x_can = tgt.x().select(Axis(0), &split.can_idx);
        let x_res = tgt.x().select(Axis(0), &split.res_idx);

        // from round 2 on the candidate set is the whole target, so K repeats
        let k = match cached.take() {
            Some((idx, k)) if idx == split.can_idx => k,
            _ => {
                let stacked = stack_rows(src.x(), x_can.view())?;
                gram(stacked.view(), cfg.kernel)?
            }
        };
        let l = IntraClassMMDMatrix::new(src.y(), &split.y_can, n_classes);
        let h = centering(k.n())?;
        let mmd = l.trace_with(k.entries());

        let mut tcfg = cfg.transfer;
        if tcfg.dim > k.n() {
            log::debug!("clamping subspace dimension {} to {}", tcfg.dim, k.n());
            tcfg.dim = k.n();
        }
        let w = solve_stl_transform(&k, &l, &h, &tcfg).map_err(|e| e.at_iteration(it))?;
        let z = project(&k, &w)?;
        let (y_can, y_res) = second_annotation(
            &z,
            src.y(),
            x_can.view(),
            x_res.view(),
            &cfg.final_classifier,
            n_classes,
        )?;

        for (&i, &l) in split.can_idx.iter().zip(&y_can) {
            y_t[i] = l;
        }
        for (&i, &l) in split.res_idx.iter().zip(&y_res) {
            y_t[i] = l;
        }
        let changed = y_t.iter().zip(&previous).filter(|(a, b)| Some(**a) != **b).count();
        let candidate_accuracy = truth.map(|t| {
            let tc: Vec<usize> = split.can_idx.iter().map(|&i| t[i]).collect();
            accuracy(&tc, &y_can).expect("nonempty candidates")
        });
        log::debug!("iteration {it}: mmd {mmd:.6e}, {changed} labels changed");
        records.push(IterationRecord {
            iteration: it,
            intra_class_mmd: mmd,
            changed,
            n_candidates: split.can_idx.len(),
            candidate_accuracy,
        });
        cached = Some((split.can_idx.clone(), k));
        if changed == 0 {
            converged = true;
            break;
        }
        previous = y_t.iter().map(|&l| Some(l)).collect();
        split = refresh_candidates(&y_t);
    }

    Ok(StlResult {
        y_t,
        per_iteration: records,
        fallback_source_only: false,
        converged,
    })
}

/// Final classifier trained on raw source features, applied to the target.
pub fn source_only(src: &LabeledDataset, tgt: &UnlabeledDataset, model: &ClassifierModel) -> Result<Vec<usize>> {
    fit(model, src)?.predict(tgt.x())
}

/// Trains `model` on transformed source rows and labels transformed target rows.
pub(crate) fn classify_in_subspace(
    src_rows: Array2<f64>,
    y_src: &[usize],
    tgt_rows: ArrayView2<'_, f64>,
    model: &ClassifierModel,
    n_classes: usize,
) -> Result<Vec<usize>> {
    let ds = LabeledDataset::with_classes(src_rows, y_src.to_vec(), n_classes)?;
    fit(model, &ds)?.predict(tgt_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::TransformMatrix;
    use ndarray::array;

    fn tiny_cfg() -> StlConfig {
        let mut cfg = StlConfig::with_seed(1);
        cfg.transfer.dim = 3;
        cfg.final_classifier = ClassifierModel::Knn { k: 1 };
        cfg
    }

    #[test]
    fn refresh_is_idempotent() {
        let a = refresh_candidates(&[0, 1, 0]);
        assert_eq!(a.can_idx, vec![0, 1, 2]);
        assert_eq!(a.y_can, vec![0, 1, 0]);
        assert!(a.res_idx.is_empty());
        assert_eq!(refresh_candidates(&a.y_can), a);
    }

    #[test]
    fn second_annotation_coincident_points() {
        // identity K: Z = Wᵀ; source and candidate columns identical
        let k = KernelMatrix::from_matrix(Array2::eye(4)).unwrap();
        let w = TransformMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]], vec![0.0; 2], 2).unwrap();
        let z = project(&k, &w).unwrap();
        let x_can = array![[0.0, 0.0], [5.0, 5.0]];
        let x_res = array![[5.0, 5.0]];
        let model = ClassifierModel::Knn { k: 1 };
        let (y_can, y_res) = second_annotation(&z, &[0, 1], x_can.view(), x_res.view(), &model, 2).unwrap();
        assert_eq!(y_can, vec![0, 1]);
        assert_eq!(y_res, vec![1]);
        let (_, empty) =
            second_annotation(&z, &[0, 1], x_can.view(), Array2::zeros((0, 2)).view(), &model, 2).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn single_candidate_class_labels_residuals() {
        let k = KernelMatrix::from_matrix(Array2::eye(4)).unwrap();
        let w = TransformMatrix::new(array![[1.0], [1.0], [0.0], [1.0]], vec![0.0], 3).unwrap();
        let z = project(&k, &w).unwrap();
        // 3NN in the subspace, then k capped to the single candidate for residuals
        let (y_can, y_res) = second_annotation(
            &z,
            &[1, 1, 0],
            array![[0.0]].view(),
            array![[9.0], [-9.0]].view(),
            &ClassifierModel::Knn { k: 3 },
            2,
        )
        .unwrap();
        assert_eq!(y_can, vec![1]);
        assert_eq!(y_res, vec![1, 1]);
    }

    #[test]
    fn zero_shift_is_stable() {
        let x = array![[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [5.0, 5.0], [5.2, 4.9], [4.8, 5.1]];
        let src = LabeledDataset::new(x.clone(), vec![0, 0, 0, 1, 1, 1]).unwrap();
        let tgt = UnlabeledDataset::new(x).unwrap();
        let r = run_stl_with_truth(&src, &tgt, &tiny_cfg(), Some(src.y())).unwrap();
        assert_eq!(r.y_t, src.y());
        assert_eq!(r.per_iteration[0].candidate_accuracy, Some(1.0));
        assert!(r.converged);
        assert_eq!(r.per_iteration.len(), 1);
    }

    #[test]
    fn one_iteration_cap() {
        let src = LabeledDataset::new(array![[0.0], [0.1], [3.0], [3.1]], vec![0, 0, 1, 1]).unwrap();
        let tgt = UnlabeledDataset::new(array![[1.2], [1.6], [2.0], [0.5]]).unwrap();
        let mut cfg = tiny_cfg();
        cfg.max_iterations = 1;
        let r = run_stl(&src, &tgt, &cfg).unwrap();
        assert_eq!(r.per_iteration.len(), 1);
        assert_eq!(r.y_t.len(), 4);
    }

    #[test]
    fn no_candidates_falls_back() {
        let src = LabeledDataset::new(array![[0.0], [1.0], [0.45]], vec![0, 1, 1]).unwrap();
        let tgt = UnlabeledDataset::new(array![[0.2]]).unwrap();
        let mut cfg = tiny_cfg();
        // 1NN says 0, 3NN says 1: no strict majority of two voters
        cfg.base_classifiers = vec![ClassifierModel::Knn { k: 1 }, ClassifierModel::Knn { k: 3 }];
        let r = run_stl(&src, &tgt, &cfg).unwrap();
        assert!(r.fallback_source_only);
        assert_eq!(r.y_t.len(), 1);
        assert!(r.per_iteration.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let src = LabeledDataset::new(array![[0.0], [1.0]], vec![0, 1]).unwrap();
        let tgt = UnlabeledDataset::new(array![[0.4, 1.0]]).unwrap();
        assert!(matches!(run_stl(&src, &tgt, &tiny_cfg()), Err(StlError::InvalidInput(_))));
    }
}
