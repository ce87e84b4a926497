//! Evaluation harness: accuracy, synthetic shifts, CSV I/O, and repeated tasks.

mod io;
mod synth;

pub use io::{
    load_feature_csv, load_labels_csv, load_raw_csv, parse_feature_csv, parse_raw_csv, write_feature_csv,
    write_feature_rows, write_feature_vectors, write_labels_csv, FeatureTable,
};
pub use synth::{grid_mean, synth_shift, GRID_SPACING};

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stack_rows, LabeledDataset, UnlabeledDataset};
use crate::error::{Result, StlError};
use crate::kernel::gram;
use crate::mmd::centering;
use crate::pipeline::{classify_in_subspace, run_stl_with_truth, source_only, IterationRecord, StlConfig};
use crate::transfer::{project, solve_global_transform, Pca};

/// Fraction of positions where the labels agree.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(StlError::invalid(format!(
            "label sequences differ in length ({} vs {})",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(StlError::invalid("accuracy of an empty label sequence"));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stl,
    /// One projection aligning whole domains, no class structure.
    Global,
    Pca,
    SourceOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Stl, Method::Global, Method::Pca, Method::SourceOnly];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stl => "stl",
            Method::Global => "global",
            Method::Pca => "pca",
            Method::SourceOnly => "source_only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = StlError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| StlError::invalid(format!("unknown method `{s}`")))
    }
}

/// Labels produced by one method on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub labels: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub fallback_source_only: bool,
}

impl MethodOutput {
    fn plain(labels: Vec<usize>) -> Self {
        Self {
            labels,
            iterations: Vec::new(),
            fallback_source_only: false,
        }
    }
}

/// Labels `tgt` with `method`; baselines use `cfg.final_classifier`.
pub fn run_method(
    method: Method,
    src: &LabeledDataset,
    tgt: &UnlabeledDataset,
    cfg: &StlConfig,
    truth: Option<&[usize]>,
) -> Result<MethodOutput> {
    if src.dim() != tgt.dim() {
        return Err(StlError::invalid(format!(
            "source has {} features, target has {}",
            src.dim(),
            tgt.dim()
        )));
    }
    match method {
        Method::Stl => {
            let r = run_stl_with_truth(src, tgt, cfg, truth)?;
            Ok(MethodOutput {
                labels: r.y_t,
                iterations: r.per_iteration,
                fallback_source_only: r.fallback_source_only,
            })
        }
        Method::SourceOnly => Ok(MethodOutput::plain(source_only(src, tgt, &cfg.final_classifier)?)),
        Method::Global => {
            let stacked = stack_rows(src.x(), tgt.x())?;
            let k = gram(stacked.view(), cfg.kernel)?;
            let h = centering(k.n())?;
            let mut tcfg = cfg.transfer;
            tcfg.dim = tcfg.dim.min(k.n());
            let w = solve_global_transform(&k, &h, src.len(), &tcfg)?;
            let z = project(&k, &w)?;
            let tgt_rows = z.candidate_rows();
            let labels = classify_in_subspace(
                z.source_rows(),
                src.y(),
                tgt_rows.view(),
                &cfg.final_classifier,
                src.n_classes(),
            )?;
            Ok(MethodOutput::plain(labels))
        }
        Method::Pca => {
            let stacked = stack_rows(src.x(), tgt.x())?;
            let m = cfg.transfer.dim.min(stacked.ncols()).min(stacked.nrows());
            let pca = Pca::fit(stacked.view(), m)?;
            let zs = pca.transform(src.x())?;
            let zt = pca.transform(tgt.x())?;
            let labels = classify_in_subspace(zs, src.y(), zt.view(), &cfg.final_classifier, src.n_classes())?;
            Ok(MethodOutput::plain(labels))
        }
    }
}

/// Method, settings and repetition scheme of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub method: Method,
    pub config: StlConfig,
    pub repeats: usize,
    pub shuffle_seed: u64,
}

impl Protocol {
    pub fn new(method: Method, config: StlConfig) -> Self {
        Self {
            method,
            config,
            repeats: 5,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    /// Target labels; a `label` column in the target file serves the same role.
    pub truth_path: Option<PathBuf>,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeat: usize,
    pub shuffle_seed: u64,
    pub accuracy: Option<f64>,
    /// Predicted target labels in the input file's row order.
    pub labels: Option<Vec<usize>>,
    pub iterations: Vec<IterationRecord>,
    pub fallback_source_only: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub n_source: usize,
    pub n_target: usize,
    pub repeats: Vec<RepeatReport>,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub config: StlConfig,
    pub shuffle_seed: u64,
    pub wall_time_s: f64,
}

impl Report {
    /// Accuracies of the successful repeats, in repeat order.
    pub fn accuracies(&self) -> Vec<f64> {
        self.repeats.iter().filter_map(|r| r.accuracy).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable summary with accuracies in percent.
    pub fn summary(&self) -> String {
        let ok = self.repeats.iter().filter(|r| r.error.is_none()).count();
        let mut s = String::new();
        let _ = writeln!(s, "method     {}", self.method);
        let _ = writeln!(s, "samples    {} source, {} target", self.n_source, self.n_target);
        let _ = writeln!(s, "repeats    {} ({} ok)", self.repeats.len(), ok);
        if let (Some(m), Some(sd)) = (self.mean_accuracy, self.std_accuracy) {
            let _ = writeln!(s, "accuracy   {:.2} ± {:.2} %", 100.0 * m, 100.0 * sd);
            let per: Vec<String> = self.accuracies().iter().map(|a| format!("{:.2}", 100.0 * a)).collect();
            let _ = writeln!(s, "per repeat {}", per.join(" "));
        } else {
            let _ = writeln!(s, "accuracy   n/a (no target labels)");
        }
        for r in self.repeats.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(s, "repeat {} failed: {}", r.repeat, r.error.as_deref().unwrap_or(""));
        }
        let _ = write!(s, "wall time  {:.2} s", self.wall_time_s);
        s
    }
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Loads the task's files and runs [`run_protocol`].
pub fn run_task(spec: &TaskSpec) -> Result<Report> {
    let src = match load_feature_csv(&spec.source_path)? {
        FeatureTable::Labeled(d) => d,
        FeatureTable::Unlabeled(_) => {
            return Err(StlError::invalid(format!(
                "source file {} has no label column",
                spec.source_path.display()
            )))
        }
    };
    let target = load_feature_csv(&spec.target_path)?;
    let truth = match &spec.truth_path {
        Some(p) => Some(load_labels_csv(p)?),
        None => target.labels().map(<[usize]>::to_vec),
    };
    run_protocol(&src, &target.unlabeled(), truth.as_deref(), &spec.protocol)
}

/// Runs `protocol.repeats` shuffled repetitions of one method.
///
/// Repeat `i` reorders both domains with a Fisher–Yates shuffle seeded by
/// `shuffle_seed + i`, so different methods see identical splits. A failing
/// repeat is recorded in the report; the task fails only if every repeat does.
pub fn run_protocol(
    src: &LabeledDataset,
    tgt: &UnlabeledDataset,
    truth: Option<&[usize]>,
    protocol: &Protocol,
) -> Result<Report> {
    if protocol.repeats == 0 {
        return Err(StlError::invalid("repeats must be at least 1"));
    }
    if let Some(t) = truth {
        if t.len() != tgt.len() {
            return Err(StlError::invalid(format!(
                "truth has {} labels for {} target rows",
                t.len(),
                tgt.len()
            )));
        }
    }
    let start = Instant::now();
    let outcomes: Vec<(RepeatReport, Option<StlError>)> = (0..protocol.repeats)
        .into_par_iter()
        .map(|i| {
            let seed = protocol.shuffle_seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src_order = shuffled(src.len(), &mut rng);
            let tgt_order = shuffled(tgt.len(), &mut rng);
            let s = src.permuted(&src_order);
            let t = tgt.permuted(&tgt_order);
            let tr: Option<Vec<usize>> = truth.map(|y| tgt_order.iter().map(|&j| y[j]).collect());
            let mut report = RepeatReport {
                repeat: i,
                shuffle_seed: seed,
                accuracy: None,
                labels: None,
                iterations: Vec::new(),
                fallback_source_only: false,
                error: None,
            };
            match run_method(protocol.method, &s, &t, &protocol.config, tr.as_deref()) {
                Ok(out) => {
                    if let Some(tr) = &tr {
                        report.accuracy = Some(accuracy(tr, &out.labels).expect("lengths match"));
                    }
                    let mut labels = vec![0; tgt.len()];
                    for (pos, &j) in tgt_order.iter().enumerate() {
                        labels[j] = out.labels[pos];
                    }
                    report.labels = Some(labels);
                    report.iterations = out.iterations;
                    report.fallback_source_only = out.fallback_source_only;
                    (report, None)
                }
                Err(e) => {
                    log::warn!("repeat {i} failed: {e}");
                    report.error = Some(e.to_string());
                    (report, Some(e))
                }
            }
        })
        .collect();

    let mut repeats = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for (r, e) in outcomes {
        if first_error.is_none() {
            first_error = e;
        }
        repeats.push(r);
    }
    if repeats.iter().all(|r| r.error.is_some()) {
        return Err(first_error.expect("every repeat failed"));
    }
    let accs: Vec<f64> = repeats.iter().filter_map(|r| r.accuracy).collect();
    let (mean, std) = if accs.is_empty() {
        (None, None)
    } else {
        let m = accs.iter().sum::<f64>() / accs.len() as f64;
        let v = accs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / accs.len() as f64;
        (Some(m), Some(v.sqrt()))
    };
    Ok(Report {
        method: protocol.method,
        n_source: src.len(),
        n_target: tgt.len(),
        repeats,
        mean_accuracy: mean,
        std_accuracy: std,
        config: protocol.config.clone(),
        shuffle_seed: protocol.shuffle_seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Sizes the global worker pool from `STL_THREADS`, if set.
///
/// Returns the thread count applied. Must run before any parallel work.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let Ok(v) = std::env::var("STL_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| StlError::invalid(format!("STL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| StlError::invalid(format!("cannot size thread pool: {e}")))?;
    Ok(Some(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifierModel;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert!((accuracy(&[1, 2, 3], &[1, 2, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(accuracy(&[1], &[2]).unwrap(), 0.0);
        assert!(matches!(accuracy(&[1, 2], &[1]), Err(StlError::InvalidInput(_))));
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("tca".parse::<Method>().is_err());
    }

    fn quick_protocol(method: Method, repeats: usize) -> Protocol {
        let mut cfg = StlConfig::with_seed(3);
        cfg.transfer.dim = 5;
        cfg.max_iterations = 3;
        cfg.final_classifier = ClassifierModel::Knn { k: 3 };
        Protocol {
            method,
            config: cfg,
            repeats,
            shuffle_seed: 11,
        }
    }

    #[test]
    fn source_only_zero_shift_is_accurate() {
        let (s, t) = synth_shift(4, 100, 10, &[], 1.0, 7).unwrap();
        let mut p = quick_protocol(Method::SourceOnly, 5);
        p.config.final_classifier = ClassifierModel::default_final(0);
        let r = run_protocol(&s, &t.unlabeled(), Some(t.y()), &p).unwrap();
        assert_eq!(r.accuracies().len(), 5);
        assert!(r.mean_accuracy.unwrap() >= 0.95, "{}", r.summary());
    }

    #[test]
    fn every_method_runs_and_is_deterministic() {
        let (s, t) = synth_shift(3, 20, 4, &[1.5], 1.0, 2).unwrap();
        for m in Method::ALL {
            let p = quick_protocol(m, 2);
            let a = run_protocol(&s, &t.unlabeled(), Some(t.y()), &p).unwrap();
            let b = run_protocol(&s, &t.unlabeled(), Some(t.y()), &p).unwrap();
            assert_eq!(a.repeats, b.repeats, "{m}");
            for a in a.accuracies() {
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn labels_only_without_truth() {
        let (s, t) = synth_shift(2, 10, 3, &[], 1.0, 4).unwrap();
        let r = run_protocol(&s, &t.unlabeled(), None, &quick_protocol(Method::SourceOnly, 1)).unwrap();
        assert!(r.mean_accuracy.is_none());
        assert_eq!(r.repeats[0].labels.as_ref().unwrap().len(), 20);
        assert!(r.summary().contains("n/a"));
    }

    #[test]
    fn labels_map_back_to_input_order() {
        // 1NN on identical domains labels every target row with its own source label
        let (s, _) = synth_shift(3, 10, 2, &[], 1.0, 8).unwrap();
        let mut p = quick_protocol(Method::SourceOnly, 3);
        p.config.final_classifier = ClassifierModel::Knn { k: 1 };
        let r = run_protocol(&s, &s.unlabeled(), Some(s.y()), &p).unwrap();
        for rep in &r.repeats {
            assert_eq!(rep.labels.as_deref(), Some(s.y()));
            assert_eq!(rep.accuracy, Some(1.0));
        }
    }

    #[test]
    fn failed_repeats_are_recorded() {
        let (s, t) = synth_shift(2, 5, 2, &[], 1.0, 0).unwrap();
        let mut p = quick_protocol(Method::SourceOnly, 2);
        p.config.final_classifier = ClassifierModel::Knn { k: 50 };
        assert!(run_protocol(&s, &t.unlabeled(), Some(t.y()), &p).is_err());
        p.repeats = 0;
        assert!(run_protocol(&s, &t.unlabeled(), Some(t.y()), &p).is_err());
        let p = quick_protocol(Method::SourceOnly, 1);
        assert!(run_protocol(&s, &t.unlabeled(), Some(&[0]), &p).is_err());
    }

    #[test]
    fn task_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = synth_shift(2, 15, 3, &[], 1.0, 1).unwrap();
        let sp = dir.path().join("s.csv");
        let tp = dir.path().join("t.csv");
        let yp = dir.path().join("y.csv");
        write_feature_csv(&sp, s.x(), Some(s.y())).unwrap();
        write_feature_csv(&tp, t.x(), None).unwrap();
        write_labels_csv(&yp, t.y()).unwrap();
        let spec = TaskSpec {
            source_path: sp.clone(),
            target_path: tp.clone(),
            truth_path: Some(yp),
            protocol: quick_protocol(Method::Stl, 2),
        };
        let r = run_task(&spec).unwrap();
        assert_eq!(r.accuracies().len(), 2);
        let json = r.to_json().unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back.repeats, r.repeats);
        let bad = TaskSpec {
            source_path: tp,
            target_path: sp,
            truth_path: None,
            protocol: quick_protocol(Method::Stl, 1),
        };
        assert!(run_task(&bad).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_permutation_invariant(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50), seed in any::<u64>()) {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let order = shuffled(a.len(), &mut ChaCha8Rng::seed_from_u64(seed));
            let pa: Vec<usize> = order.iter().map(|&i| a[i]).collect();
            let pb: Vec<usize> = order.iter().map(|&i| b[i]).collect();
            let acc = accuracy(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert_eq!(acc, accuracy(&pa, &pb).unwrap());
        }
    }
}
