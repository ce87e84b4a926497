//! Stratified transfer learning for cross-domain classification.
//!
//! A labeled source domain and an unlabeled target domain are related by
//! pseudo-labeling the target through majority voting, then learning a
//! kernel subspace in which source and pseudo-labeled target samples of the
//! same class are close in maximum mean discrepancy. Labels are refined in
//! that subspace and the procedure repeats until they settle.
//!
//! ```no_run
//! use stl_core::{run_stl, synth_shift, StlConfig};
//!
//! let (src, tgt) = synth_shift(4, 100, 10, &[2.0], 1.0, 7)?;
//! let result = run_stl(&src, &tgt.unlabeled(), &StlConfig::with_seed(0))?;
//! println!("{:?}", &result.y_t[..10]);
//! # Ok::<(), stl_core::StlError>(())
//! ```

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classify;
pub mod data;
pub mod error;
pub mod features;
pub mod kernel;
mod linalg;
pub mod mmd;
pub mod pipeline;
pub mod transfer;

pub use bench::{accuracy, run_method, run_protocol, run_task, synth_shift, Method, Protocol, Report, TaskSpec};
pub use classify::{ClassifierModel, ForestParams, TrainedModel, TreeParams};
pub use data::{LabeledDataset, UnlabeledDataset};
pub use error::{Result, StlError};
pub use features::{extract_features, FeatureVector, SensorStream, Window};
pub use kernel::{gram, Bandwidth, KernelMatrix, KernelSpec};
pub use mmd::{centering, intra_class_mmd, mmd_distance, CenteringMatrix, IntraClassMMDMatrix};
pub use pipeline::{run_stl, run_stl_with_truth, source_only, IterationRecord, StlConfig, StlResult};
pub use transfer::{project, solve_stl_transform, SolverRoute, TransferConfig, TransformMatrix, TransformedData};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
