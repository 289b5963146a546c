//! Synthetic instance generators, assumption diagnostics, and the Monte-Carlo
//! consistency harness.
//!
//! Replicate RNG: every generator seeds a portable `ChaCha8` stream from the
//! design's `seed` and a caller-supplied substream index, so replicate `r`
//! draws from substream `r` regardless of execution order — parallel runs
//! match serial runs bit for bit.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GicError, Result};
use crate::gic::{
    all_group_supports, default_psi_budget, select_exhaustive, select_on_path, GicResult,
};
use crate::linalg;
use crate::loss::{sigmoid, Dataset, GlmFamily, LossProblem};
use crate::model::{
    GroupPartition, ModelSubspace, ParamPoint, ParamShape, RegularizerSpec,
};
use crate::parallel::map_indexed;
use crate::path::{lambda_grid, PathPoint, PenaltySchedule, ScheduleKind};
use crate::solver::SolveOptions;

/// Smallest admissible constant in the refit signal condition,
/// `(3 / 2sqrt(2)) * (3 + sqrt(2)) = 4.68198...`, rounded up.
pub const A4P_C: f64 = 4.682;

const RSC_TRIALS: usize = 200;
const RSC_SEED: u64 = 0x5eed_d1a6;

/// Grouped GLM design: `G` contiguous groups of `m` coordinates, the first
/// `s_star` groups active with per-group norm `signal`, AR(1) covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupGlmDesign {
    #[serde(default)]
    pub n: usize,
    /// Ambient dimension; 0 means "derive as G*m".
    #[serde(default)]
    pub p: usize,
    #[serde(rename = "G")]
    pub g: usize,
    pub m: usize,
    pub s_star: usize,
    pub signal: f64,
    pub family: GlmFamily,
    pub noise_sd: f64,
    pub covariate_corr: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GroupGlmDesign {
    /// Canonical consistency experiment: G=20, m=4, s*=3, unit signal,
    /// sigma=0.5, independent covariates.
    pub fn standard(n: usize, seed: u64) -> Self {
        GroupGlmDesign {
            n,
            p: 80,
            g: 20,
            m: 4,
            s_star: 3,
            signal: 1.0,
            family: GlmFamily::Gaussian,
            noise_sd: 0.5,
            covariate_corr: 0.0,
            seed,
        }
    }

    pub fn p_effective(&self) -> usize {
        self.g * self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.g == 0 || self.m == 0 {
            return Err(GicError::InvalidArgument(
                "group design needs n, G, m >= 1".into(),
            ));
        }
        if self.p != 0 && self.p != self.g * self.m {
            return Err(GicError::InvalidArgument(format!(
                "p = {} but G*m = {} (equal groups)",
                self.p,
                self.g * self.m
            )));
        }
        if self.s_star > self.g {
            return Err(GicError::InvalidArgument(format!(
                "s_star = {} exceeds G = {}",
                self.s_star, self.g
            )));
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return Err(GicError::InvalidArgument("signal must be finite and >= 0".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(GicError::InvalidArgument("noise_sd must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.covariate_corr) {
            return Err(GicError::InvalidArgument(format!(
                "covariate_corr must lie in [0, 1), got {}",
                self.covariate_corr
            )));
        }
        Ok(())
    }
}

/// Low-rank trace-regression design: iid standard-Gaussian measurement
/// matrices, `Theta* = U* S* V*^T` with singular values linearly spaced in
/// `[sv_min, 2 sv_min]` (descending, so the r-th is exactly `sv_min`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowRankDesign {
    #[serde(default)]
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub r_star: usize,
    pub sv_min: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl LowRankDesign {
    /// Canonical low-rank experiment: 20x20, rank 2, sv_min=2, sigma=0.5.
    pub fn standard(n: usize, seed: u64) -> Self {
        LowRankDesign { n, p1: 20, p2: 20, r_star: 2, sv_min: 2.0, noise_sd: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p1 == 0 || self.p2 == 0 {
            return Err(GicError::InvalidArgument(
                "low-rank design needs n, p1, p2 >= 1".into(),
            ));
        }
        if self.r_star > self.p1.min(self.p2) {
            return Err(GicError::InvalidArgument(format!(
                "r_star = {} exceeds min(p1, p2) = {}",
                self.r_star,
                self.p1.min(self.p2)
            )));
        }
        if !(self.sv_min > 0.0 && self.sv_min.is_finite()) {
            return Err(GicError::InvalidArgument("sv_min must be finite and > 0".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(GicError::InvalidArgument("noise_sd must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A generated problem with its ground truth.
pub struct Instance {
    pub problem: LossProblem,
    pub theta_star: ParamPoint,
    pub model_star: ModelSubspace,
    pub reg: RegularizerSpec,
    /// Group normalization constant `max_g ||X_g||_F / sqrt(n)` (group
    /// designs only; columns are rescaled so this equals `sqrt(m)`).
    pub group_norm_c: Option<f64>,
}

/// Generate a grouped GLM instance. The active groups are the first `s_star`
/// (adjacent, hence maximally correlated under AR(1) — the hard case); each
/// active coordinate is `signal / sqrt(m)` so every active group norm equals
/// `signal` exactly.
pub fn gen_group_glm(d: &GroupGlmDesign, stream: u64) -> Result<Instance> {
    d.validate()?;
    let (n, p, m) = (d.n, d.p_effective(), d.m);
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    rng.set_stream(stream);

    // AR(1) within each row: unit marginal variance, corr^|j-k| correlation.
    let rho = d.covariate_corr;
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = if j == 0 { z } else { rho * prev + innov * z };
            x[(i, j)] = v;
            prev = v;
        }
    }

    // Rescale each group block so ||X_g||_F / sqrt(n) = sqrt(m) exactly: the
    // normalization constant the theory assumes, made deterministic.
    let partition = GroupPartition::contiguous(d.g, m);
    let target = ((n * m) as f64).sqrt();
    let mut c_norm: f64 = 0.0;
    for g_idx in 0..d.g {
        let cols = partition.group(g_idx);
        let fro: f64 = cols
            .iter()
            .map(|&j| x.column(j).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if fro > 0.0 {
            let s = target / fro;
            for &j in cols {
                x.column_mut(j).mapv_inplace(|v| v * s);
            }
        }
        let after: f64 = cols
            .iter()
            .map(|&j| x.column(j).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        c_norm = c_norm.max(after / (n as f64).sqrt());
    }

    let active: Vec<usize> = if d.signal > 0.0 { (0..d.s_star).collect() } else { Vec::new() };
    let mut theta = Array1::zeros(p);
    let per_coord = d.signal / (m as f64).sqrt();
    for &g_idx in &active {
        for &j in partition.group(g_idx) {
            theta[j] = per_coord;
        }
    }

    let lin = x.dot(&theta);
    let y = match d.family {
        GlmFamily::Gaussian => {
            let noise: Array1<f64> =
                Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
            &lin + &(noise * d.noise_sd)
        }
        // Bernoulli responses; noise_sd plays no role here.
        GlmFamily::Logistic => {
            Array1::from_shape_fn(n, |i| if rng.random::<f64>() < sigmoid(lin[i]) { 1.0 } else { 0.0 })
        }
    };

    let model_star = ModelSubspace::group_support(partition.clone(), active)?;
    Ok(Instance {
        problem: LossProblem::new(Dataset::tabular(x, y, d.family)?),
        theta_star: ParamPoint::Vector(theta),
        model_star,
        reg: RegularizerSpec::group_l2(partition),
        group_norm_c: Some(c_norm),
    })
}

/// Generate a low-rank trace-regression instance: `y_i = <X_i, Theta*> +
/// noise_sd * eps_i` with iid standard-Gaussian `X_i`.
pub fn gen_lowrank(d: &LowRankDesign, stream: u64) -> Result<Instance> {
    d.validate()?;
    let (n, p1, p2, r) = (d.n, d.p1, d.p2, d.r_star);
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    rng.set_stream(stream);

    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        xs.push(Array2::from_shape_fn((p1, p2), |_| rng.sample::<f64, _>(StandardNormal)));
    }

    let (theta, model_star) = if r == 0 {
        (Array2::zeros((p1, p2)), ModelSubspace::zero_matrix(p1, p2))
    } else {
        let raw_u = Array2::from_shape_fn((p1, r), |_| rng.sample::<f64, _>(StandardNormal));
        let raw_v = Array2::from_shape_fn((p2, r), |_| rng.sample::<f64, _>(StandardNormal));
        let u = linalg::orthonormal_cols(&raw_u.view());
        let v = linalg::orthonormal_cols(&raw_v.view());
        // Descending from 2*sv_min to exactly sv_min (single value: sv_min).
        let sv: Vec<f64> = (0..r)
            .map(|k| {
                if r == 1 {
                    d.sv_min
                } else {
                    d.sv_min * (1.0 + (r - 1 - k) as f64 / (r - 1) as f64)
                }
            })
            .collect();
        let mut scaled = u.clone();
        for k in 0..r {
            scaled.column_mut(k).mapv_inplace(|val| val * sv[k]);
        }
        (scaled.dot(&v.t()), ModelSubspace::low_rank(u, v)?)
    };

    let y = Array1::from_shape_fn(n, |i| {
        let fit: f64 = xs[i].iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let eps: f64 = rng.sample(StandardNormal);
        fit + d.noise_sd * eps
    });

    Ok(Instance {
        problem: LossProblem::new(Dataset::matrix_reg(xs, y)?),
        theta_star: ParamPoint::Matrix(theta),
        model_star,
        reg: RegularizerSpec::nuclear(),
        group_norm_c: None,
    })
}

/// Heuristic curvature constant: half the smallest eigenvalue of the
/// empirical Hessian at `theta_star` restricted to the span of the given
/// subspaces (typically `M*` and `M-hat`). The restricted-strong-convexity
/// probe reads `loss growth >= kappa ||d||^2 - tau^2 Phi^2(d)` — no 1/2 on
/// the quadratic — so for an exact quadratic loss the zero-violation constant
/// is `lambda_min / 2`. A sampling heuristic, not the population kappa.
pub fn kappa_hyp_default(
    problem: &LossProblem,
    theta_star: &ParamPoint,
    models: &[&ModelSubspace],
) -> Result<f64> {
    let shape = problem.param_shape();
    let ambient = shape.len();
    let dim_guess: usize = models
        .iter()
        .map(|m| match m {
            ModelSubspace::GroupSupport { .. } => {
                m.active_coordinates().map_or(0, |c| c.len())
            }
            ModelSubspace::LowRank { u, v } => u.ncols() * (u.nrows() + v.nrows()),
        })
        .sum();
    if dim_guess == 0 {
        return Err(GicError::InvalidArgument(
            "kappa heuristic needs at least one active direction; pass kappa explicitly".into(),
        ));
    }

    // Random ambient points projected through each subspace span the sum of
    // the subspaces almost surely; Gram-Schmidt extracts an orthonormal basis.
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1a6);
    let mut basis: Vec<ParamPoint> = Vec::new();
    for _ in 0..dim_guess + 2 {
        let raw: Vec<f64> = (0..ambient).map(|_| rng.sample(StandardNormal)).collect();
        let z = match shape {
            ParamShape::Vector(p) => ParamPoint::Vector(Array1::from_shape_fn(p, |j| raw[j])),
            ParamShape::Matrix(p1, p2) => {
                ParamPoint::Matrix(Array2::from_shape_fn((p1, p2), |(i, j)| raw[i * p2 + j]))
            }
        };
        for m in models {
            let mut v = m.project(&z)?;
            for b in &basis {
                v = v.add_scaled(-v.inner(b), b);
            }
            let nrm = v.norm();
            if nrm > 1e-8 {
                basis.push(v.scaled(1.0 / nrm));
            }
        }
    }
    if basis.is_empty() {
        return Err(GicError::InvalidArgument(
            "kappa heuristic found no active direction; pass kappa explicitly".into(),
        ));
    }

    let d = basis.len();
    let mut h = Array2::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let v = problem.hessian_bilinear(theta_star, &basis[i], &basis[j])?;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let (evals, _) = linalg::sym_eig_desc(&h.view());
    Ok((evals[d - 1] / 2.0).max(0.0))
}

/// One verdict of the assumption diagnostics: both sides of the inequality
/// plus the boolean.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Verdict {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Diagnostic report for the selection-consistency assumptions on a synthetic
/// instance (ground truth required).
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub kappa_hyp: f64,
    /// A1: `Psi^2(M*) <= psi_budget` (lhs = complexity, rhs = budget).
    pub a1: Verdict,
    /// A3: `(2/kappa) Phi*(grad L(theta*)) <= sqrt(a_n)`.
    pub a3: Verdict,
    /// A4: smallest active atom vs `(2/kappa) sqrt(a_n) Psi(M*)`; the
    /// left side reads 0 for an empty true model (no signal to clear the bar).
    pub a4: Verdict,
    /// A4': same signal vs `(c/kappa) lambda Psi(M-bar*)`, with
    /// `Psi(M-bar*) = Psi(M*)` for both instantiations here.
    pub a4_prime: Verdict,
    /// Fraction of local restricted-strong-convexity probe violations.
    pub rsc_violation_rate: f64,
}

/// Evaluate A1, A3, A4, A4' and the RSC probe on a generated instance.
/// `kappa_hyp = None` uses [`kappa_hyp_default`] over `M*` alone.
pub fn check_assumptions(
    inst: &Instance,
    kappa_hyp: Option<f64>,
    tau_sq_hyp: f64,
    eta_hyp: f64,
    schedule: &PenaltySchedule,
    lambda: f64,
) -> Result<AssumptionReport> {
    let kappa = match kappa_hyp {
        Some(k) if k > 0.0 && k.is_finite() => k,
        Some(k) => {
            return Err(GicError::InvalidArgument(format!(
                "kappa_hyp must be a positive real, got {k}"
            )))
        }
        None => kappa_hyp_default(&inst.problem, &inst.theta_star, &[&inst.model_star])?,
    };
    let a_n = schedule.a_n();
    let psi = inst.model_star.psi_sq().sqrt();

    let budget = default_psi_budget(&inst.problem);
    let a1 = Verdict {
        lhs: inst.model_star.psi_sq(),
        rhs: budget,
        holds: inst.model_star.psi_sq() <= budget,
    };

    let grad = inst.problem.loss_grad(&inst.theta_star)?;
    let grad_term = 2.0 / kappa * inst.reg.phi_dual(&grad)?;
    let a3 = Verdict { lhs: grad_term, rhs: a_n.sqrt(), holds: grad_term <= a_n.sqrt() };

    let min_signal = if inst.model_star.complexity() == 0 {
        0.0
    } else {
        inst.model_star.min_atom_signal(&inst.theta_star)?
    };
    let a4_bound = 2.0 / kappa * a_n.sqrt() * psi;
    let a4 = Verdict { lhs: min_signal, rhs: a4_bound, holds: min_signal > a4_bound };

    let a4p_bound = A4P_C / kappa * lambda * psi;
    let a4_prime = Verdict { lhs: min_signal, rhs: a4p_bound, holds: min_signal > a4p_bound };

    let rsc_violation_rate = inst.problem.rsc_probe(
        &inst.theta_star,
        &inst.reg,
        kappa,
        tau_sq_hyp,
        eta_hyp,
        RSC_TRIALS,
        RSC_SEED,
    )?;

    Ok(AssumptionReport { kappa_hyp: kappa, a1, a3, a4, a4_prime, rsc_violation_rate })
}

/// True iff some path point extracted exactly the true model (group supports
/// compare by support; low-rank by rank — extracted factors carry an O(lambda)
/// rotation, so factor angles are checked on selected models only).
pub fn path_contains_truth<'a, I>(path: I, m_star: &ModelSubspace) -> bool
where
    I: IntoIterator<Item = &'a PathPoint>,
{
    path.into_iter().any(|p| p.model.same_subspace(m_star, None))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMethod {
    /// Proximal path + criterion over extracted models.
    Path,
    /// Brute force over all group supports (G <= 16, group designs only).
    Exhaustive,
}

/// How each replicate selects a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub method: SelectorMethod,
    pub k_grid: usize,
    pub ratio: f64,
    pub c_gic: f64,
    pub c_xi: f64,
    pub log_n_factor: bool,
    /// `None`: the `min(p, n)/2` default.
    pub psi_budget: Option<f64>,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            method: SelectorMethod::Path,
            k_grid: 50,
            ratio: 1e-3,
            c_gic: 1.0,
            c_xi: 0.5,
            log_n_factor: false,
            psi_budget: None,
        }
    }
}

/// Per-n aggregate row of a Monte-Carlo study. Means are over completed
/// replicates; failures are counted separately.
#[derive(Clone, Debug, Serialize)]
pub struct McRow {
    pub n: usize,
    pub exact_recovery_rate: f64,
    pub mean_support_hamming: f64,
    pub mean_error_norm: f64,
    pub mean_selected_size: f64,
    pub replicates: usize,
    pub failures: usize,
    /// Fraction of replicates whose path visited `M*` (path selector only).
    pub path_truth_rate: Option<f64>,
}

/// Per-replicate detail line.
#[derive(Clone, Debug, Serialize)]
pub struct McDetail {
    pub n: usize,
    pub replicate: usize,
    pub recovered: Option<bool>,
    pub support_hamming: Option<f64>,
    pub error_norm: Option<f64>,
    pub selected_size: Option<f64>,
    pub truth_on_path: Option<bool>,
    pub error: Option<String>,
}

/// Full Monte-Carlo report: per-n rows, per-replicate details, and the
/// aggregated failure messages.
#[derive(Clone, Debug, Serialize, Default)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub details: Vec<McDetail>,
    pub failures: Vec<String>,
}

struct RepOutcome {
    recovered: bool,
    hamming: f64,
    error_norm: f64,
    selected_size: f64,
    truth_on_path: Option<bool>,
}

fn compare_selected(
    inst: &Instance,
    best: &GicResult,
    noiseless: bool,
    truth_on_path: Option<bool>,
) -> RepOutcome {
    let m_star = &inst.model_star;
    let m_hat = &best.model;
    // Noiseless low-rank recovery also demands factor alignment (principal
    // angles <= 1e-6); under noise, rank equality is the recovery surrogate.
    let angle_tol = if noiseless { Some(1e-6) } else { None };
    let recovered = m_star.same_subspace(m_hat, angle_tol);
    let hamming = match (m_star.support(), m_hat.support()) {
        (Some(s1), Some(s2)) => s1.symmetric_difference(s2).count() as f64,
        _ => (m_star.complexity() as f64 - m_hat.complexity() as f64).abs(),
    };
    RepOutcome {
        recovered,
        hamming,
        error_norm: best.theta.sub(&inst.theta_star).norm(),
        selected_size: m_hat.complexity() as f64,
        truth_on_path,
    }
}

fn run_replicate(
    design: &DesignSpec,
    n: usize,
    master_seed: u64,
    stream: u64,
    sel: &SelectorConfig,
) -> Result<RepOutcome> {
    let (inst, schedule, noiseless) = match design {
        DesignSpec::Group(base) => {
            let mut d = base.clone();
            d.n = n;
            d.seed = master_seed;
            let inst = gen_group_glm(&d, stream)?;
            let kind = ScheduleKind::GroupGlm { m: d.m, g: d.g, n };
            (inst, PenaltySchedule::new(kind, sel.c_gic, sel.log_n_factor)?, d.noise_sd == 0.0)
        }
        DesignSpec::Lowrank(base) => {
            let mut d = base.clone();
            d.n = n;
            d.seed = master_seed;
            let inst = gen_lowrank(&d, stream)?;
            let kind = ScheduleKind::LowRank { p1: d.p1, p2: d.p2, n };
            (inst, PenaltySchedule::new(kind, sel.c_gic, sel.log_n_factor)?, d.noise_sd == 0.0)
        }
    };
    let budget = sel.psi_budget.unwrap_or_else(|| default_psi_budget(&inst.problem));
    match sel.method {
        SelectorMethod::Path => {
            let grid = lambda_grid(&inst.problem, &inst.reg, sel.k_grid, sel.ratio)?;
            let selection = select_on_path(
                &inst.problem,
                &inst.reg,
                &grid,
                &schedule,
                sel.c_xi,
                budget,
                &SolveOptions::default(),
            )?;
            let truth = path_contains_truth(
                selection.entries.iter().map(|e| &e.point),
                &inst.model_star,
            );
            let best = selection.best_entry().and_then(|e| e.gic.as_ref()).ok_or_else(|| {
                GicError::DegenerateData("no admissible path point (all excluded)".into())
            })?;
            Ok(compare_selected(&inst, best, noiseless, Some(truth)))
        }
        SelectorMethod::Exhaustive => {
            let partition = inst.reg.partition().ok_or_else(|| {
                GicError::InvalidArgument(
                    "exhaustive selection needs a group design".into(),
                )
            })?;
            let candidates = all_group_supports(partition)?;
            let chosen = select_exhaustive(&inst.problem, &candidates, &schedule, budget)?;
            Ok(compare_selected(&inst, chosen.best(), noiseless, None))
        }
    }
}

/// Run `replicates` independent draws of the design at sample size `n` and
/// aggregate. Replicate `r` uses RNG substream `r`; reduction is in replicate
/// order, so the report is deterministic given `master_seed`.
pub fn monte_carlo(
    design: &DesignSpec,
    n: usize,
    sel: &SelectorConfig,
    replicates: usize,
    master_seed: u64,
) -> Result<(McRow, Vec<McDetail>, Vec<String>)> {
    if replicates == 0 {
        return Err(GicError::InvalidArgument("replicates must be >= 1".into()));
    }
    let outcomes: Vec<Result<RepOutcome>> =
        map_indexed(replicates, |r| run_replicate(design, n, master_seed, r as u64, sel));

    let mut details = Vec::with_capacity(replicates);
    let mut failures = Vec::new();
    let (mut ok, mut rec, mut ham, mut err_norm, mut size) = (0usize, 0usize, 0.0, 0.0, 0.0);
    let (mut truth_known, mut truth_hits) = (0usize, 0usize);
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                ok += 1;
                rec += o.recovered as usize;
                ham += o.hamming;
                err_norm += o.error_norm;
                size += o.selected_size;
                if let Some(t) = o.truth_on_path {
                    truth_known += 1;
                    truth_hits += t as usize;
                }
                details.push(McDetail {
                    n,
                    replicate: r,
                    recovered: Some(o.recovered),
                    support_hamming: Some(o.hamming),
                    error_norm: Some(o.error_norm),
                    selected_size: Some(o.selected_size),
                    truth_on_path: o.truth_on_path,
                    error: None,
                });
            }
            Err(e) => {
                failures.push(format!("n={n} replicate {r}: {e}"));
                details.push(McDetail {
                    n,
                    replicate: r,
                    recovered: None,
                    support_hamming: None,
                    error_norm: None,
                    selected_size: None,
                    truth_on_path: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let denom = ok.max(1) as f64;
    let row = McRow {
        n,
        exact_recovery_rate: rec as f64 / denom,
        mean_support_hamming: ham / denom,
        mean_error_norm: err_norm / denom,
        mean_selected_size: size / denom,
        replicates,
        failures: replicates - ok,
        path_truth_rate: (truth_known > 0).then(|| truth_hits as f64 / truth_known as f64),
    };
    Ok((row, details, failures))
}

/// Which generator an experiment uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "spec", rename_all = "snake_case")]
pub enum DesignSpec {
    Group(GroupGlmDesign),
    Lowrank(LowRankDesign),
}

/// A full experiment: one design swept over sample sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub design: DesignSpec,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub selector: SelectorConfig,
}

impl ExperimentSpec {
    /// The canonical grouped consistency study.
    pub fn standard_group(master_seed: u64) -> Self {
        ExperimentSpec {
            design: DesignSpec::Group(GroupGlmDesign::standard(0, 0)),
            ns: vec![50, 100, 200, 400],
            replicates: 100,
            master_seed,
            selector: SelectorConfig::default(),
        }
    }

    /// The canonical low-rank consistency study.
    pub fn standard_lowrank(master_seed: u64) -> Self {
        ExperimentSpec {
            design: DesignSpec::Lowrank(LowRankDesign::standard(0, 0)),
            ns: vec![200, 400, 800],
            replicates: 100,
            master_seed,
            selector: SelectorConfig::default(),
        }
    }
}

/// Run the experiment over its sample-size grid.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<McReport> {
    if spec.ns.is_empty() {
        return Err(GicError::InvalidArgument("experiment needs at least one n".into()));
    }
    let mut report = McReport::default();
    for &n in &spec.ns {
        let (row, details, failures) =
            monte_carlo(&spec.design, n, &spec.selector, spec.replicates, spec.master_seed)?;
        report.rows.push(row);
        report.details.extend(details);
        report.failures.extend(failures);
    }
    Ok(report)
}

/// Per-n report table (the five aggregate fields), 12 significant digits.
pub fn report_csv(report: &McReport) -> String {
    use crate::data_io::fmt_sig12 as f;
    let mut out = String::from(
        "n,exact_recovery_rate,mean_support_hamming,mean_error_norm,mean_selected_size,replicates\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            f(r.exact_recovery_rate),
            f(r.mean_support_hamming),
            f(r.mean_error_norm),
            f(r.mean_selected_size),
            r.replicates
        ));
    }
    out
}

/// Per-replicate detail table; failed replicates carry the message in the
/// last column and empty metric cells.
pub fn details_csv(report: &McReport) -> String {
    use crate::data_io::fmt_sig12 as f;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "replicate",
        "recovered",
        "support_hamming",
        "error_norm",
        "selected_size",
        "truth_on_path",
        "error",
    ])
    .expect("in-memory write");
    let flag = |b: Option<bool>| b.map_or(String::new(), |v| (v as u8).to_string());
    let num = |v: Option<f64>| v.map_or(String::new(), f);
    for d in &report.details {
        w.write_record([
            d.n.to_string(),
            d.replicate.to_string(),
            flag(d.recovered),
            num(d.support_hamming),
            num(d.error_norm),
            num(d.selected_size),
            flag(d.truth_on_path),
            d.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}
