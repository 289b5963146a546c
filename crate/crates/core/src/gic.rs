//! The information criterion itself and the two selectors built on it:
//! exhaustive enumeration over explicit candidates and minimization along a
//! regularization path.

use std::collections::HashMap;

use crate::error::{GicError, Result};
use crate::loss::LossProblem;
use crate::model::{ModelSubspace, ParamPoint, ParamShape, SubspaceKey};
use crate::model::{GroupPartition, RegularizerSpec};
use crate::parallel::map_indexed;
use crate::path::{trace_path, PathPoint, PenaltySchedule};
use crate::solver::{restricted_fit, SolveOptions};

/// A model evaluated by the criterion: restricted fit, complexity, and the
/// resulting score `gic = loss + a_n * psi_sq` (stored exactly as computed).
#[derive(Clone, Debug)]
pub struct GicResult {
    pub model: ModelSubspace,
    /// Restricted fit `argmin_{theta in M} L(theta)`.
    pub theta: ParamPoint,
    pub loss: f64,
    pub psi_sq: f64,
    pub a_n: f64,
    pub gic: f64,
    /// Restricted normal equations were rank-deficient.
    pub singular: bool,
    pub fit_converged: bool,
}

/// Default complexity budget `min(p, n) / 2`, where `p` counts the atoms the
/// complexity measure ranges over: coordinates for vector models, the shorter
/// matrix dimension (the number of possible singular directions) for low-rank
/// models.
pub fn default_psi_budget(problem: &LossProblem) -> f64 {
    let p = match problem.param_shape() {
        ParamShape::Vector(p) => p,
        ParamShape::Matrix(p1, p2) => p1.min(p2),
    };
    p.min(problem.n()) as f64 / 2.0
}

/// Evaluate the criterion for one model. Models over the complexity budget
/// are rejected, not truncated.
pub fn gic(
    problem: &LossProblem,
    model: &ModelSubspace,
    a_n: f64,
    psi_budget: f64,
) -> Result<GicResult> {
    if !(a_n > 0.0 && a_n.is_finite()) {
        return Err(GicError::InvalidArgument(format!(
            "a_n must be a positive real, got {a_n}"
        )));
    }
    let psi_sq = model.psi_sq();
    if psi_sq > psi_budget {
        return Err(GicError::PsiBudgetExceeded { psi_sq, budget: psi_budget });
    }
    let fit = restricted_fit(problem, model)?;
    let gic = fit.loss + a_n * psi_sq;
    Ok(GicResult {
        model: model.clone(),
        theta: fit.theta,
        loss: fit.loss,
        psi_sq,
        a_n,
        gic,
        singular: fit.singular,
        fit_converged: fit.converged,
    })
}

/// Outcome of exhaustive selection: `results` aligns with the candidate list.
#[derive(Clone, Debug)]
pub struct ExhaustiveSelection {
    pub best_index: usize,
    pub results: Vec<GicResult>,
}

impl ExhaustiveSelection {
    pub fn best(&self) -> &GicResult {
        &self.results[self.best_index]
    }
}

/// `(gic, psi_sq, key)` with exact float comparison: selection must be
/// deterministic, and structural ties (identical losses) are real.
fn better(a: &GicResult, b: &GicResult) -> bool {
    if a.gic != b.gic {
        return a.gic < b.gic;
    }
    if a.psi_sq != b.psi_sq {
        return a.psi_sq < b.psi_sq;
    }
    a.model.key() < b.model.key()
}

/// Minimize the criterion over an explicit candidate list. Ties go to the
/// smaller complexity, then to the lexicographically smaller model. Restricted
/// fits are independent and run data-parallel.
pub fn select_exhaustive(
    problem: &LossProblem,
    candidates: &[ModelSubspace],
    schedule: &PenaltySchedule,
    psi_budget: f64,
) -> Result<ExhaustiveSelection> {
    if candidates.is_empty() {
        return Err(GicError::InvalidArgument("no candidate models".into()));
    }
    let a_n = schedule.a_n();
    let results: Vec<Result<GicResult>> =
        map_indexed(candidates.len(), |i| gic(problem, &candidates[i], a_n, psi_budget));
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best_index = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        if better(r, &results[best_index]) {
            best_index = i;
        }
    }
    Ok(ExhaustiveSelection { best_index, results })
}

/// Every group support of the partition, in bitmask order (the empty support
/// first). Exponential in G, hence the hard cap.
pub fn all_group_supports(partition: &GroupPartition) -> Result<Vec<ModelSubspace>> {
    let g = partition.num_groups();
    if g > 16 {
        return Err(GicError::InvalidArgument(format!(
            "exhaustive enumeration over 2^{g} supports is not tractable (cap: G <= 16)"
        )));
    }
    let mut out = Vec::with_capacity(1 << g);
    for mask in 0u32..(1u32 << g) {
        let support = (0..g).filter(|i| mask >> i & 1 == 1);
        out.push(ModelSubspace::group_support(partition.clone(), support)?);
    }
    Ok(out)
}

/// One path point together with its criterion evaluation (absent when the
/// point was excluded from selection).
#[derive(Clone, Debug)]
pub struct PathEntry {
    pub point: PathPoint,
    pub gic: Option<GicResult>,
    /// Why the point is not a candidate: solver non-convergence or a
    /// complexity over budget.
    pub exclusion: Option<String>,
}

/// Full record of path-based selection, ordered by descending lambda.
#[derive(Clone, Debug)]
pub struct PathSelection {
    pub entries: Vec<PathEntry>,
    /// Index of the selected entry; `None` when no path point was eligible.
    pub best: Option<usize>,
    pub a_n: f64,
}

impl PathSelection {
    pub fn best_entry(&self) -> Option<&PathEntry> {
        self.best.map(|i| &self.entries[i])
    }
}

/// Trace the path over `grid`, evaluate the criterion once per distinct
/// extracted model (refits run data-parallel), and pick the minimizer.
/// Ties go to the smaller complexity, then to the larger lambda. Unconverged
/// or over-budget points are excluded from selection but stay in `entries`.
pub fn select_on_path(
    problem: &LossProblem,
    reg: &RegularizerSpec,
    grid: &[f64],
    schedule: &PenaltySchedule,
    c_xi: f64,
    psi_budget: f64,
    opts: &SolveOptions,
) -> Result<PathSelection> {
    let a_n = schedule.a_n();
    let path = trace_path(problem, reg, grid, c_xi, opts)?;

    // A group support fully identifies its subspace, so equal supports share
    // one refit. Equal-rank low-rank models carry different factors at
    // different lambdas and are genuinely distinct: refit those per point.
    let mut jobs: Vec<ModelSubspace> = Vec::new();
    let mut job_of_point: Vec<Option<usize>> = vec![None; path.len()];
    let mut group_job: HashMap<SubspaceKey, usize> = HashMap::new();
    for (i, p) in path.iter().enumerate() {
        if !p.converged || p.model.psi_sq() > psi_budget {
            continue;
        }
        let j = match p.model.key() {
            key @ SubspaceKey::Group(_) => *group_job.entry(key).or_insert_with(|| {
                jobs.push(p.model.clone());
                jobs.len() - 1
            }),
            SubspaceKey::Rank(_) => {
                jobs.push(p.model.clone());
                jobs.len() - 1
            }
        };
        job_of_point[i] = Some(j);
    }
    let fits: Vec<Result<GicResult>> =
        map_indexed(jobs.len(), |j| gic(problem, &jobs[j], a_n, psi_budget));
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(path.len());
    let mut best: Option<usize> = None;
    for (i, point) in path.into_iter().enumerate() {
        let (gic_res, exclusion) = if !point.converged {
            (
                None,
                Some(format!(
                    "solver did not converge (kkt = {:.3e})",
                    point.kkt
                )),
            )
        } else if point.model.psi_sq() > psi_budget {
            (
                None,
                Some(format!(
                    "complexity {} exceeds budget {psi_budget}",
                    point.model.psi_sq()
                )),
            )
        } else {
            (Some(fits[job_of_point[i].unwrap()].clone()), None)
        };
        if let Some(r) = &gic_res {
            // Grid is descending, so keeping the incumbent on ties prefers
            // the larger lambda.
            let incumbent = best.map(|b: usize| entries.get(b).unwrap() as &PathEntry);
            let beats = match incumbent.and_then(|e| e.gic.as_ref()) {
                Some(cur) => {
                    r.gic < cur.gic || (r.gic == cur.gic && r.psi_sq < cur.psi_sq)
                }
                None => true,
            };
            if beats {
                best = Some(i);
            }
        }
        entries.push(PathEntry { point, gic: gic_res, exclusion });
    }
    Ok(PathSelection { entries, best, a_n })
}
