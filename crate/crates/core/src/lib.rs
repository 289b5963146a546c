//! Structured-sparsity model selection with generalized information criteria.
//!
//! The crate estimates sparse or low-rank parameters by minimizing a smooth
//! empirical loss plus a decomposable regularizer (group L2, elementwise L1,
//! or nuclear norm), walks a regularization path to harvest candidate model
//! subspaces, and picks among them with a generalized information criterion
//! whose penalty weights the squared subspace compatibility constant.
//!
//! Modules:
//! * [`model`] — parameter points, partitions, subspaces, regularizers;
//! * [`loss`] — GLM and matrix-regression losses with curvature probes;
//! * [`solver`] — accelerated proximal gradient with KKT certificates;
//! * [`path`] / [`gic`] — regularization paths and criterion-based selection;
//! * [`experiments`] — synthetic designs, assumption checks, Monte Carlo;
//! * [`data_io`] — CSV/JSON readers and writers for datasets and reports.

pub mod data_io;
pub mod error;
pub mod experiments;
pub mod gic;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod parallel;
pub mod path;
pub mod solver;

pub use data_io::fmt_sig12;
pub use error::{GicError, Result};
pub use experiments::{
    check_assumptions, gen_group_glm, gen_lowrank, monte_carlo, path_contains_truth,
    run_experiment, DesignSpec, ExperimentSpec, GroupGlmDesign, Instance, LowRankDesign,
    McReport, SelectorConfig, SelectorMethod,
};
pub use gic::{
    all_group_supports, default_psi_budget, gic, select_exhaustive, select_on_path,
    ExhaustiveSelection, GicResult, PathEntry, PathSelection,
};
pub use loss::{Dataset, GlmFamily, LossProblem};
pub use model::{GroupPartition, ModelSubspace, ParamPoint, ParamShape, RegularizerSpec};
pub use path::{lambda_grid, trace_path, xi_n, PathPoint, PenaltySchedule, ScheduleKind};
pub use solver::{
    kkt_residual, restricted_fit, solve_regularized, RestrictedFit, SolveOptions, SolveOutcome,
    TraceRecord,
};
