//! Regularization-path plumbing: penalty-rate schedules `a_n`, the geometric
//! lambda grid, the model-extraction threshold, and warm-started path traces.

use serde::{Deserialize, Serialize};

use crate::error::{GicError, Result};
use crate::loss::LossProblem;
use crate::model::{ModelSubspace, ParamPoint, RegularizerSpec};
use crate::solver::{solve_regularized, SolveOptions};

/// Which asymptotic rate the GIC penalty weight follows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Group-sparse GLM rate `(m + ln G)/n` for G groups of size <= m.
    GroupGlm { m: usize, g: usize, n: usize },
    /// Low-rank matrix-regression rate `(p1 + p2)/n`.
    LowRank { p1: usize, p2: usize, n: usize },
    /// Fixed user-supplied value (hook for external criteria).
    Custom { value: f64 },
}

/// Penalty weight `a_n` for the GIC: rate kind, a positive multiplier, and an
/// optional slowly-growing `ln n` inflation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub kind: ScheduleKind,
    pub c_gic: f64,
    pub log_n_factor: bool,
}

impl PenaltySchedule {
    pub fn new(kind: ScheduleKind, c_gic: f64, log_n_factor: bool) -> Result<Self> {
        if !(c_gic > 0.0 && c_gic.is_finite()) {
            return Err(GicError::InvalidArgument(format!(
                "c_gic must be a positive real, got {c_gic}"
            )));
        }
        match &kind {
            ScheduleKind::GroupGlm { m, g, n } => {
                if *m == 0 || *g == 0 || *n == 0 {
                    return Err(GicError::InvalidArgument(
                        "group schedule needs m >= 1, G >= 1, n >= 1".into(),
                    ));
                }
            }
            ScheduleKind::LowRank { p1, p2, n } => {
                if *p1 == 0 || *p2 == 0 || *n == 0 {
                    return Err(GicError::InvalidArgument(
                        "low-rank schedule needs p1, p2, n >= 1".into(),
                    ));
                }
            }
            ScheduleKind::Custom { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(GicError::InvalidArgument(format!(
                        "custom a_n must be a positive real, got {value}"
                    )));
                }
                if log_n_factor {
                    return Err(GicError::InvalidArgument(
                        "log_n_factor needs a sample size; it cannot apply to a custom a_n".into(),
                    ));
                }
            }
        }
        Ok(PenaltySchedule { kind, c_gic, log_n_factor })
    }

    /// The penalty weight. Positive, and non-increasing in `n` for fixed
    /// dimensions (the `ln n` factor is clamped below by 1 so small samples
    /// cannot invert that monotonicity or zero the weight).
    pub fn a_n(&self) -> f64 {
        let base = match &self.kind {
            ScheduleKind::GroupGlm { m, g, n } => {
                (*m as f64 + (*g as f64).ln()) / *n as f64
            }
            ScheduleKind::LowRank { p1, p2, n } => (*p1 as f64 + *p2 as f64) / *n as f64,
            ScheduleKind::Custom { value } => return self.c_gic * value,
        };
        let log_n = if self.log_n_factor {
            let n = match &self.kind {
                ScheduleKind::GroupGlm { n, .. } | ScheduleKind::LowRank { n, .. } => *n,
                ScheduleKind::Custom { .. } => unreachable!("rejected at construction"),
            };
            (n as f64).ln().max(1.0)
        } else {
            1.0
        };
        self.c_gic * base * log_n
    }
}

/// Descending, log-uniform grid from `lambda_max = Phi^*(grad L(0))` (the
/// smallest penalty whose solution is exactly zero) down to `ratio *
/// lambda_max`.
pub fn lambda_grid(
    problem: &LossProblem,
    reg: &RegularizerSpec,
    k: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(GicError::InvalidArgument(format!(
            "grid needs at least 2 points, got {k}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GicError::InvalidArgument(format!(
            "grid ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let g0 = problem.loss_grad(&problem.zero_point())?;
    let lambda_max = reg.phi_dual(&g0)?;
    if !(lambda_max > 0.0) {
        return Err(GicError::DegenerateData(
            "gradient at zero vanishes; the zero model solves every penalized problem".into(),
        ));
    }
    let km1 = (k - 1) as f64;
    Ok((0..k)
        .map(|i| lambda_max * ratio.powf(i as f64 / km1))
        .collect())
}

/// Model-extraction threshold tied to the penalty level. The theory's
/// `(c'/kappa) * lambda * Psi(closure of M*)` has unknowable constants; they
/// are folded into the single tunable `c_xi`.
pub fn xi_n(lambda: f64, c_xi: f64) -> f64 {
    debug_assert!(lambda > 0.0 && c_xi >= 0.0);
    c_xi * lambda
}

/// One solved point of the regularization path.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub lambda: f64,
    pub theta: ParamPoint,
    /// `extract_model(theta, xi_n(lambda, c_xi))`.
    pub model: ModelSubspace,
    pub kkt: f64,
    pub converged: bool,
}

/// Solve the penalized problem at every grid value, warm-starting each solve
/// from the previous solution. Non-converged points are recorded with
/// `converged = false` rather than dropped.
pub fn trace_path(
    problem: &LossProblem,
    reg: &RegularizerSpec,
    lambdas: &[f64],
    c_xi: f64,
    opts: &SolveOptions,
) -> Result<Vec<PathPoint>> {
    if lambdas.is_empty() {
        return Err(GicError::InvalidArgument("empty lambda grid".into()));
    }
    if !(c_xi >= 0.0 && c_xi.is_finite()) {
        return Err(GicError::InvalidArgument(format!(
            "c_xi must be finite and nonnegative, got {c_xi}"
        )));
    }
    for w in lambdas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(GicError::InvalidArgument(
                "lambda grid must be strictly descending (warm starts flow that way)".into(),
            ));
        }
    }
    if !(lambdas[0].is_finite() && *lambdas.last().unwrap() > 0.0) {
        return Err(GicError::InvalidArgument(
            "lambda grid must be finite and positive".into(),
        ));
    }

    let mut points = Vec::with_capacity(lambdas.len());
    let mut init: Option<ParamPoint> = None;
    for &lambda in lambdas {
        let out = solve_regularized(problem, reg, lambda, init.as_ref(), opts)?;
        let model = reg.extract_model(&out.theta, xi_n(lambda, c_xi))?;
        init = Some(out.theta.clone());
        points.push(PathPoint {
            lambda,
            theta: out.theta,
            model,
            kkt: out.kkt,
            converged: out.converged,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormal_cols;
    use crate::loss::{Dataset, GlmFamily};
    use crate::model::GroupPartition;
    use ndarray::{array, Array1, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn group_problem() -> (LossProblem, RegularizerSpec) {
        let x = array![
            [0.497, -0.138, 0.648, 1.523, -0.234, -0.234],
            [1.579, 0.767, -0.469, 0.543, -0.463, -0.466],
            [0.242, -1.913, -1.725, -0.562, -1.013, 0.314],
            [-0.908, -1.412, 1.466, -0.226, 0.068, -1.425],
            [-0.544, 0.111, -1.151, 0.376, -0.601, -0.292],
            [-0.602, 1.852, -0.013, -1.058, 0.823, -1.221],
            [0.209, -1.960, -1.328, 0.197, 0.738, 0.171],
            [-0.116, -0.301, -1.479, -0.720, -0.461, 1.057],
        ];
        let y = array![0.588, -0.271, 3.788, -0.232, -1.937, -5.353, 5.132, 1.421];
        let problem =
            LossProblem::new(Dataset::tabular(x, y, GlmFamily::Gaussian).unwrap());
        let partition =
            GroupPartition::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        (problem, RegularizerSpec::group_l2(partition))
    }

    #[test]
    fn a_n_matches_frozen_formula_values() {
        // (m + ln G)/n and (p1 + p2)/n against independently computed values.
        let s = PenaltySchedule::new(
            ScheduleKind::GroupGlm { m: 4, g: 20, n: 100 },
            2.0,
            false,
        )
        .unwrap();
        assert!((s.a_n() - 1.39914645471079818e-1).abs() < 1e-16);

        let s_log = PenaltySchedule::new(
            ScheduleKind::GroupGlm { m: 4, g: 20, n: 100 },
            2.0,
            true,
        )
        .unwrap();
        assert!((s_log.a_n() - 6.44330753906510623e-1).abs() < 1e-15);

        let lr = PenaltySchedule::new(
            ScheduleKind::LowRank { p1: 20, p2: 30, n: 500 },
            1.0,
            false,
        )
        .unwrap();
        assert!((lr.a_n() - 0.1).abs() < 1e-16);
        let lr_log = PenaltySchedule::new(
            ScheduleKind::LowRank { p1: 20, p2: 30, n: 500 },
            1.0,
            true,
        )
        .unwrap();
        assert!((lr_log.a_n() - 6.21460809842219186e-1).abs() < 1e-15);
    }

    #[test]
    fn a_n_log_factor_clamps_small_samples() {
        // ln(2) < 1 would make ln(n)/n non-monotone below n = e; the clamp
        // keeps a_n = 0.5 at n = 2 and preserves monotonicity in n.
        let s = PenaltySchedule::new(ScheduleKind::GroupGlm { m: 1, g: 1, n: 2 }, 1.0, true)
            .unwrap();
        assert_eq!(s.a_n(), 0.5);
        let mut prev = f64::INFINITY;
        for n in 1..200 {
            let s = PenaltySchedule::new(
                ScheduleKind::GroupGlm { m: 4, g: 20, n },
                1.0,
                true,
            )
            .unwrap();
            let a = s.a_n();
            assert!(a > 0.0);
            assert!(a <= prev, "a_n increased between n = {} and {}", n - 1, n);
            prev = a;
        }
    }

    #[test]
    fn a_n_halves_when_n_doubles() {
        let a1 = PenaltySchedule::new(
            ScheduleKind::GroupGlm { m: 4, g: 20, n: 100 },
            1.0,
            false,
        )
        .unwrap()
        .a_n();
        let a2 = PenaltySchedule::new(
            ScheduleKind::GroupGlm { m: 4, g: 20, n: 200 },
            1.0,
            false,
        )
        .unwrap()
        .a_n();
        assert!((a1 - 2.0 * a2).abs() < 1e-16);
    }

    #[test]
    fn custom_schedule_passes_value_through() {
        let s = PenaltySchedule::new(ScheduleKind::Custom { value: 0.37 }, 1.0, false).unwrap();
        assert_eq!(s.a_n(), 0.37);
        let scaled =
            PenaltySchedule::new(ScheduleKind::Custom { value: 0.37 }, 2.0, false).unwrap();
        assert_eq!(scaled.a_n(), 0.74);
        assert!(PenaltySchedule::new(ScheduleKind::Custom { value: 0.37 }, 1.0, true).is_err());
        assert!(PenaltySchedule::new(ScheduleKind::Custom { value: 0.0 }, 1.0, false).is_err());
        assert!(
            PenaltySchedule::new(ScheduleKind::GroupGlm { m: 4, g: 20, n: 100 }, 0.0, false)
                .is_err()
        );
    }

    #[test]
    fn grid_endpoints_spacing_and_direction() {
        let (problem, reg) = group_problem();
        let grid = lambda_grid(&problem, &reg, 7, 0.01).unwrap();
        assert_eq!(grid.len(), 7);
        let g0 = problem.loss_grad(&problem.zero_point()).unwrap();
        let lmax = reg.phi_dual(&g0).unwrap();
        assert_eq!(grid[0], lmax);
        assert!((grid[6] - 0.01 * lmax).abs() <= 1e-15 * lmax);
        for w in grid.windows(2) {
            assert!(w[1] < w[0]);
        }
        // Log-uniform: consecutive ratios all equal.
        let r0 = grid[1] / grid[0];
        for w in grid.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
        assert!(lambda_grid(&problem, &reg, 1, 0.01).is_err());
        assert!(lambda_grid(&problem, &reg, 5, 1.0).is_err());
    }

    #[test]
    fn solution_is_zero_exactly_at_grid_head_and_nonzero_below() {
        let (problem, reg) = group_problem();
        let grid = lambda_grid(&problem, &reg, 5, 0.1).unwrap();
        let at_head = solve_regularized(
            &problem,
            &reg,
            grid[0],
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(at_head.theta.norm(), 0.0);
        assert_eq!(at_head.iterations, 0);
        let below = solve_regularized(
            &problem,
            &reg,
            grid[0] * 0.98,
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(below.converged);
        assert!(below.theta.norm() > 0.0, "below lambda_max zero is not optimal");
    }

    #[test]
    fn grid_rejects_zero_gradient_data() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![0.0, 0.0];
        let problem =
            LossProblem::new(Dataset::tabular(x, y, GlmFamily::Gaussian).unwrap());
        let reg = RegularizerSpec::elementwise_l1(2);
        assert!(matches!(
            lambda_grid(&problem, &reg, 5, 0.1),
            Err(GicError::DegenerateData(_))
        ));
    }

    #[test]
    fn trace_path_records_models_and_flags() {
        let (problem, reg) = group_problem();
        let grid = lambda_grid(&problem, &reg, 8, 0.01).unwrap();
        let path = trace_path(&problem, &reg, &grid, 0.5, &SolveOptions::default()).unwrap();
        assert_eq!(path.len(), 8);
        // At lambda_max the solution is zero, so the extracted model is empty.
        assert_eq!(path[0].model.complexity(), 0);
        for p in &path {
            assert!(p.converged, "lambda = {} did not converge", p.lambda);
            assert!(p.kkt <= 1e-7);
            // Stored model is the documented function of theta and lambda.
            let again = reg.extract_model(&p.theta, xi_n(p.lambda, 0.5)).unwrap();
            assert!(p.model.same_subspace(&again, None));
        }
        // The smallest lambda keeps at least as many groups as the largest.
        assert!(path.last().unwrap().model.complexity() >= path[0].model.complexity());
    }

    #[test]
    fn trace_path_rejects_unsorted_grids() {
        let (problem, reg) = group_problem();
        assert!(trace_path(&problem, &reg, &[], 0.5, &SolveOptions::default()).is_err());
        assert!(
            trace_path(&problem, &reg, &[0.1, 0.2], 0.5, &SolveOptions::default()).is_err()
        );
        assert!(
            trace_path(&problem, &reg, &[0.2, -0.1], 0.5, &SolveOptions::default()).is_err()
        );
    }

    #[test]
    fn group_norms_shrink_monotonically_on_orthonormal_design() {
        // With X^T X / n = I the penalized solution is groupwise
        // soft-thresholding of the OLS fit, so every group norm is
        // non-increasing in lambda; check the whole path.
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        let q = orthonormal_cols(&raw.view());
        let x = q.mapv(|v| v * (n as f64).sqrt());
        let y: Array1<f64> =
            Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal)) * 2.0;
        let problem =
            LossProblem::new(Dataset::tabular(x, y, GlmFamily::Gaussian).unwrap());
        let partition = GroupPartition::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        let reg = RegularizerSpec::group_l2(partition.clone());
        let grid = lambda_grid(&problem, &reg, 12, 0.001).unwrap();
        let path = trace_path(&problem, &reg, &grid, 0.0, &SolveOptions::default()).unwrap();
        for g in 0..partition.num_groups() {
            let mut prev = f64::INFINITY;
            // Path is descending in lambda: norms must be non-decreasing
            // along it, i.e. non-increasing in lambda.
            for p in path.iter().rev() {
                let tv = p.theta.as_vector().unwrap();
                let norm = partition.group_norm(g, &tv.view());
                assert!(
                    norm <= prev + 1e-9,
                    "group {g} norm rose from {prev} to {norm} as lambda grew"
                );
                prev = norm;
            }
        }
    }
}
