use ndarray::{Array1, Array2};

use crate::error::{GicError, Result};
use crate::linalg;
use crate::model::param::{ParamPoint, ParamShape};
use crate::model::partition::GroupPartition;
use crate::model::subspace::ModelSubspace;

/// Absolute gap under which neighboring singular values are treated as tied
/// when extracting a rank: tied values are kept or dropped together.
pub const SV_TIE_TOL: f64 = 1e-10;

/// A decomposable regularizer.
///
/// * `GroupL2`: sum of Euclidean norms over the groups of a partition.
///   Elementwise L1 is the singleton-partition special case.
/// * `Nuclear`: sum of singular values of a matrix parameter.
#[derive(Clone, Debug)]
pub enum RegularizerSpec {
    GroupL2 { partition: GroupPartition },
    Nuclear,
}

impl RegularizerSpec {
    pub fn group_l2(partition: GroupPartition) -> Self {
        RegularizerSpec::GroupL2 { partition }
    }

    pub fn elementwise_l1(p: usize) -> Self {
        RegularizerSpec::GroupL2 {
            partition: GroupPartition::singletons(p),
        }
    }

    pub fn nuclear() -> Self {
        RegularizerSpec::Nuclear
    }

    pub fn partition(&self) -> Option<&GroupPartition> {
        match self {
            RegularizerSpec::GroupL2 { partition } => Some(partition),
            RegularizerSpec::Nuclear => None,
        }
    }

    fn check_shape(&self, point: &ParamPoint) -> Result<()> {
        match (self, point.shape()) {
            (RegularizerSpec::GroupL2 { partition }, ParamShape::Vector(p)) => {
                if partition.dim() != p {
                    return Err(GicError::InvalidShape(format!(
                        "group regularizer over {} coordinates applied to a vector of length {p}",
                        partition.dim()
                    )));
                }
                Ok(())
            }
            (RegularizerSpec::Nuclear, ParamShape::Matrix(_, _)) => Ok(()),
            (RegularizerSpec::GroupL2 { .. }, ParamShape::Matrix(_, _)) => Err(
                GicError::InvalidShape("group regularizer applied to a matrix parameter".into()),
            ),
            (RegularizerSpec::Nuclear, ParamShape::Vector(_)) => Err(GicError::InvalidShape(
                "nuclear regularizer applied to a vector parameter".into(),
            )),
        }
    }

    /// The norm value `Phi(point)`.
    pub fn phi(&self, point: &ParamPoint) -> Result<f64> {
        self.check_shape(point)?;
        match self {
            RegularizerSpec::GroupL2 { partition } => {
                let v = point.as_vector()?;
                Ok((0..partition.num_groups())
                    .map(|g| partition.group_norm(g, &v.view()))
                    .sum())
            }
            RegularizerSpec::Nuclear => {
                let svd = linalg::thin_svd(&point.as_matrix()?.view());
                Ok(svd.s.sum())
            }
        }
    }

    /// The dual norm `Phi*(point)`: max group norm, or the spectral norm.
    pub fn phi_dual(&self, point: &ParamPoint) -> Result<f64> {
        self.check_shape(point)?;
        match self {
            RegularizerSpec::GroupL2 { partition } => {
                let v = point.as_vector()?;
                Ok((0..partition.num_groups())
                    .map(|g| partition.group_norm(g, &v.view()))
                    .fold(0.0, f64::max))
            }
            RegularizerSpec::Nuclear => {
                let svd = linalg::thin_svd(&point.as_matrix()?.view());
                Ok(svd.s.iter().cloned().fold(0.0, f64::max))
            }
        }
    }

    /// Proximal operator `argmin_z 0.5 ||z - point||^2 + t * Phi(z)` for `t >= 0`.
    ///
    /// Groupwise shrinkage for `GroupL2`; singular-value soft-thresholding for
    /// `Nuclear`.
    pub fn prox(&self, point: &ParamPoint, t: f64) -> Result<ParamPoint> {
        self.check_shape(point)?;
        if !(t >= 0.0) {
            return Err(GicError::InvalidArgument(format!(
                "prox step must be non-negative, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(point.clone());
        }
        match self {
            RegularizerSpec::GroupL2 { partition } => {
                let v = point.as_vector()?;
                let mut out = Array1::zeros(v.len());
                for g in 0..partition.num_groups() {
                    let norm = partition.group_norm(g, &v.view());
                    if norm > t {
                        let scale = 1.0 - t / norm;
                        for &j in partition.group(g) {
                            out[j] = scale * v[j];
                        }
                    }
                }
                Ok(ParamPoint::Vector(out))
            }
            RegularizerSpec::Nuclear => {
                let m = point.as_matrix()?;
                let svd = linalg::thin_svd(&m.view());
                let kept: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] > t).collect();
                let mut out = Array2::zeros(m.dim());
                for &i in &kept {
                    let ui = svd.u.column(i);
                    let vi = svd.v.column(i);
                    let w = svd.s[i] - t;
                    for (r, &ur) in ui.iter().enumerate() {
                        for (c, &vc) in vi.iter().enumerate() {
                            out[(r, c)] += w * ur * vc;
                        }
                    }
                }
                Ok(ParamPoint::Matrix(out))
            }
        }
    }

    /// Model extraction at threshold `xi >= 0`: groups with norm strictly above
    /// `xi`, or the subspace of singular vectors whose singular values exceed
    /// `max(xi, floor)` where `floor` guards against floating-point noise.
    /// Singular values tied within [`SV_TIE_TOL`] cross the cut together.
    pub fn extract_model(&self, point: &ParamPoint, xi: f64) -> Result<ModelSubspace> {
        self.check_shape(point)?;
        if !(xi >= 0.0) {
            return Err(GicError::InvalidArgument(format!(
                "threshold must be non-negative, got {xi}"
            )));
        }
        match self {
            RegularizerSpec::GroupL2 { partition } => {
                let v = point.as_vector()?;
                let support: Vec<usize> = (0..partition.num_groups())
                    .filter(|&g| partition.group_norm(g, &v.view()) > xi)
                    .collect();
                ModelSubspace::group_support(partition.clone(), support)
            }
            RegularizerSpec::Nuclear => {
                let m = point.as_matrix()?;
                let svd = linalg::thin_svd(&m.view());
                let k = svd.s.len();
                let lead = if k > 0 { svd.s[0] } else { 0.0 };
                let cut = xi.max(1e-12 * (1.0 + lead));
                let mut r = (0..k).filter(|&i| svd.s[i] > cut).count();
                // Grow the rank across ties so tied singular values stay together.
                while r > 0 && r < k && (svd.s[r - 1] - svd.s[r]).abs() <= SV_TIE_TOL {
                    r += 1;
                }
                if r == 0 {
                    let (p1, p2) = m.dim();
                    return Ok(ModelSubspace::zero_matrix(p1, p2));
                }
                let u = svd.u.slice(ndarray::s![.., ..r]).to_owned();
                let v = svd.v.slice(ndarray::s![.., ..r]).to_owned();
                ModelSubspace::low_rank(u, v)
            }
        }
    }

    /// Verifies the decomposability identity
    /// `Phi(theta + gamma) = Phi(theta) + Phi(gamma)` after projecting `theta`
    /// onto `m` and `gamma` onto the complement subspace of `m`.
    pub fn decompose_check(
        &self,
        m: &ModelSubspace,
        theta: &ParamPoint,
        gamma: &ParamPoint,
    ) -> Result<bool> {
        match (self, m) {
            (RegularizerSpec::GroupL2 { partition }, ModelSubspace::GroupSupport { partition: mp, .. }) => {
                if partition != mp {
                    return Err(GicError::InvalidShape(
                        "subspace partition differs from regularizer partition".into(),
                    ));
                }
            }
            (RegularizerSpec::Nuclear, ModelSubspace::LowRank { .. }) => {}
            _ => {
                return Err(GicError::InvalidShape(
                    "regularizer and subspace kinds do not match".into(),
                ))
            }
        }
        let theta_m = m.project(theta)?;
        let gamma_perp = m.project_mbar_perp(gamma)?;
        let lhs = self.phi(&theta_m.add_scaled(1.0, &gamma_perp))?;
        let rhs = self.phi(&theta_m)? + self.phi(&gamma_perp)?;
        Ok((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss_vec(rng: &mut ChaCha8Rng, p: usize) -> Array1<f64> {
        Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal))
    }

    fn gauss_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn group_norm_values() {
        let reg = RegularizerSpec::group_l2(GroupPartition::new(vec![vec![0, 1], vec![2]]).unwrap());
        let u = ParamPoint::vector(array![3.0, 4.0, 12.0]).unwrap();
        assert_abs_diff_eq!(reg.phi(&u).unwrap(), 17.0, epsilon = 1e-15);
        assert_abs_diff_eq!(reg.phi_dual(&u).unwrap(), 12.0, epsilon = 1e-15);
    }

    #[test]
    fn l1_is_singleton_group_case() {
        let reg = RegularizerSpec::elementwise_l1(3);
        let u = ParamPoint::vector(array![1.0, -2.0, 0.5]).unwrap();
        assert_abs_diff_eq!(reg.phi(&u).unwrap(), 3.5, epsilon = 1e-15);
        assert_abs_diff_eq!(reg.phi_dual(&u).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn nuclear_norm_of_diagonal_matrix() {
        let reg = RegularizerSpec::nuclear();
        let m = ParamPoint::matrix(array![[3.0, 0.0], [0.0, -4.0]]).unwrap();
        assert_abs_diff_eq!(reg.phi(&m).unwrap(), 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reg.phi_dual(&m).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn norms_scale_absolutely_and_obey_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let part = GroupPartition::contiguous(4, 3);
        let regs = [RegularizerSpec::group_l2(part), RegularizerSpec::nuclear()];
        for reg in &regs {
            for _ in 0..50 {
                let (a, b) = match reg {
                    RegularizerSpec::GroupL2 { .. } => (
                        ParamPoint::Vector(gauss_vec(&mut rng, 12)),
                        ParamPoint::Vector(gauss_vec(&mut rng, 12)),
                    ),
                    RegularizerSpec::Nuclear => (
                        ParamPoint::Matrix(gauss_mat(&mut rng, 4, 3)),
                        ParamPoint::Matrix(gauss_mat(&mut rng, 4, 3)),
                    ),
                };
                let c: f64 = rng.random::<f64>() * 4.0 - 2.0;
                let pa = reg.phi(&a).unwrap();
                let pb = reg.phi(&b).unwrap();
                let psum = reg.phi(&a.add_scaled(1.0, &b)).unwrap();
                assert!(psum <= pa + pb + 1e-10 * (1.0 + pa + pb));
                let pscaled = reg.phi(&a.scaled(c)).unwrap();
                assert_abs_diff_eq!(pscaled, c.abs() * pa, epsilon = 1e-10 * (1.0 + pa));
            }
        }
    }

    #[test]
    fn holder_inequality_and_dual_attainment() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let part = GroupPartition::contiguous(3, 2);
        let reg = RegularizerSpec::group_l2(part);
        for _ in 0..200 {
            let u = ParamPoint::Vector(gauss_vec(&mut rng, 6));
            let v = ParamPoint::Vector(gauss_vec(&mut rng, 6));
            let bound = reg.phi(&u).unwrap() * reg.phi_dual(&v).unwrap();
            assert!(u.inner(&v).abs() <= bound * (1.0 + 1e-12));
        }
        let reg_n = RegularizerSpec::nuclear();
        for _ in 0..200 {
            let a = ParamPoint::Matrix(gauss_mat(&mut rng, 3, 4));
            let b = ParamPoint::Matrix(gauss_mat(&mut rng, 3, 4));
            let bound = reg_n.phi(&a).unwrap() * reg_n.phi_dual(&b).unwrap();
            assert!(a.inner(&b).abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn group_prox_matches_hand_computed_shrinkage() {
        // ||u_{0,1}|| = 1.5 -> scale 0.6; ||u_{2,3}|| = 0.5 <= t -> zero;
        // ||u_4|| = 2 -> scale 0.7.
        let part = GroupPartition::new(vec![vec![0, 1], vec![2, 3], vec![4]]).unwrap();
        let reg = RegularizerSpec::group_l2(part);
        let u = ParamPoint::vector(array![1.2, -0.9, 0.3, 0.4, -2.0]).unwrap();
        let prox = reg.prox(&u, 0.6).unwrap();
        let expect = array![0.72, -0.54, 0.0, 0.0, -1.4];
        assert_abs_diff_eq!(prox.as_vector().unwrap(), &expect, epsilon = 1e-14);
    }

    /// Independent check of the group prox by multiresolution grid search on
    /// the separable per-group objective 0.5||z - u_g||^2 + t ||z||.
    #[test]
    fn group_prox_agrees_with_grid_search_oracle() {
        let part = GroupPartition::contiguous(2, 2);
        let reg = RegularizerSpec::group_l2(part.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let u = gauss_vec(&mut rng, 4);
            let t: f64 = 0.1 + rng.random::<f64>();
            let prox = reg.prox(&ParamPoint::Vector(u.clone()), t).unwrap();
            let pv = prox.as_vector().unwrap();
            for g in 0..2 {
                let idx = part.group(g);
                let (u0, u1) = (u[idx[0]], u[idx[1]]);
                // Grid search refined around the best cell, 3 passes.
                let mut center = (u0, u1);
                let mut half = u0.abs().max(u1.abs()) + t + 1.0;
                let mut best = (0.0, 0.0);
                for _ in 0..6 {
                    let mut best_val = f64::INFINITY;
                    for i in 0..=40 {
                        for j in 0..=40 {
                            let z0 = center.0 - half + 2.0 * half * (i as f64) / 40.0;
                            let z1 = center.1 - half + 2.0 * half * (j as f64) / 40.0;
                            let val = 0.5 * ((z0 - u0).powi(2) + (z1 - u1).powi(2))
                                + t * (z0 * z0 + z1 * z1).sqrt();
                            if val < best_val {
                                best_val = val;
                                best = (z0, z1);
                            }
                        }
                    }
                    center = best;
                    half *= 0.1;
                }
                assert_abs_diff_eq!(pv[idx[0]], best.0, epsilon = 1e-5);
                assert_abs_diff_eq!(pv[idx[1]], best.1, epsilon = 1e-5);
            }
        }
    }

    /// Frozen oracle: singular-value soft-thresholding of a fixed 3x2 matrix
    /// at t = 0.8, computed independently with numpy to 15 digits.
    #[test]
    fn nuclear_prox_matches_frozen_oracle() {
        let a = ParamPoint::matrix(array![[1.0, 2.0], [-0.5, 1.5], [2.0, 0.3]]).unwrap();
        let reg = RegularizerSpec::nuclear();
        let prox = reg.prox(&a, 0.8).unwrap();
        let expect = array![
            [0.749974651157690, 1.395986210661129],
            [-0.232308008397565, 0.975649999405207],
            [1.288783912887086, 0.314980626313316]
        ];
        assert_abs_diff_eq!(prox.as_matrix().unwrap(), &expect, epsilon = 1e-12);
    }

    #[test]
    fn prox_approaches_identity_as_step_vanishes() {
        let reg = RegularizerSpec::nuclear();
        let a = ParamPoint::matrix(array![[2.0, 0.1], [0.3, -1.0]]).unwrap();
        let prox = reg.prox(&a, 1e-12).unwrap();
        assert!(prox.sub(&a).norm() <= 1e-11);
        assert_eq!(reg.prox(&a, 0.0).unwrap(), a);
    }

    /// Prox optimality via duality: v = (u - prox(u)) / t must satisfy
    /// Phi*(v) <= 1 and <v, prox(u)> = Phi(prox(u)).
    #[test]
    fn prox_satisfies_subgradient_characterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let part = GroupPartition::contiguous(3, 3);
        let cases: Vec<(RegularizerSpec, Box<dyn Fn(&mut ChaCha8Rng) -> ParamPoint>)> = vec![
            (
                RegularizerSpec::group_l2(part),
                Box::new(|r: &mut ChaCha8Rng| ParamPoint::Vector(gauss_vec(r, 9))),
            ),
            (
                RegularizerSpec::nuclear(),
                Box::new(|r: &mut ChaCha8Rng| ParamPoint::Matrix(gauss_mat(r, 4, 3))),
            ),
        ];
        for (reg, sample) in &cases {
            for _ in 0..60 {
                let u = sample(&mut rng);
                let t: f64 = 0.05 + rng.random::<f64>();
                let th = reg.prox(&u, t).unwrap();
                let v = u.sub(&th).scaled(1.0 / t);
                assert!(reg.phi_dual(&v).unwrap() <= 1.0 + 1e-8);
                let gap = (v.inner(&th) - reg.phi(&th).unwrap()).abs();
                assert!(gap <= 1e-8, "duality gap {gap}");
            }
        }
    }

    #[test]
    fn extract_group_support_by_strict_threshold() {
        let part = GroupPartition::contiguous(3, 2);
        let reg = RegularizerSpec::group_l2(part);
        let theta = ParamPoint::vector(array![0.6, 0.8, 0.0, 0.0, 0.1, 0.0]).unwrap();
        let m = reg.extract_model(&theta, 0.5).unwrap();
        assert_eq!(m.support().unwrap().iter().copied().collect::<Vec<_>>(), vec![0]);
        // Strict: a group norm exactly at the threshold is excluded.
        let m2 = reg.extract_model(&theta, 1.0).unwrap();
        assert!(m2.support().unwrap().is_empty());
        // Zero threshold keeps every group with any mass.
        let m3 = reg.extract_model(&theta, 0.0).unwrap();
        assert_eq!(m3.support().unwrap().len(), 2);
    }

    #[test]
    fn extract_rank_keeps_tied_singular_values_together() {
        let s1 = 1.0 + 5e-11;
        let theta = ParamPoint::matrix(array![
            [3.0, 0.0, 0.0],
            [0.0, s1, 0.0],
            [0.0, 0.0, 1.0]
        ])
        .unwrap();
        let reg = RegularizerSpec::nuclear();
        // The cut falls between the two tied values; both must survive.
        let m = reg.extract_model(&theta, 1.0 + 2e-11).unwrap();
        assert_eq!(m.complexity(), 3);
        // A cut above the tie drops both.
        let m2 = reg.extract_model(&theta, 2.0).unwrap();
        assert_eq!(m2.complexity(), 1);
    }

    #[test]
    fn extract_rank_ignores_floating_point_dust_at_zero_threshold() {
        // Exact rank-1 outer product; numerical SVD produces dust singular values.
        let u = array![1.0, -2.0, 0.5];
        let v = array![0.3, 1.0, 0.7, -0.2];
        let theta = Array2::from_shape_fn((3, 4), |(i, j)| u[i] * v[j]);
        let reg = RegularizerSpec::nuclear();
        let m = reg
            .extract_model(&ParamPoint::matrix(theta).unwrap(), 0.0)
            .unwrap();
        assert_eq!(m.complexity(), 1);
    }

    #[test]
    fn decomposability_holds_on_projected_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let part = GroupPartition::contiguous(4, 2);
        let reg = RegularizerSpec::group_l2(part.clone());
        for _ in 0..50 {
            let m = ModelSubspace::group_support(part.clone(), [0, 2]).unwrap();
            let theta = ParamPoint::Vector(gauss_vec(&mut rng, 8));
            let gamma = ParamPoint::Vector(gauss_vec(&mut rng, 8));
            assert!(reg.decompose_check(&m, &theta, &gamma).unwrap());
        }
        let reg_n = RegularizerSpec::nuclear();
        for _ in 0..50 {
            let raw_u = gauss_mat(&mut rng, 5, 2);
            let raw_v = gauss_mat(&mut rng, 4, 2);
            let m = ModelSubspace::low_rank(
                linalg::orthonormal_cols(&raw_u.view()),
                linalg::orthonormal_cols(&raw_v.view()),
            )
            .unwrap();
            let theta = ParamPoint::Matrix(gauss_mat(&mut rng, 5, 4));
            let gamma = ParamPoint::Matrix(gauss_mat(&mut rng, 5, 4));
            assert!(reg_n.decompose_check(&m, &theta, &gamma).unwrap());
        }
    }

    #[test]
    fn decompose_check_rejects_mismatched_kinds() {
        let part = GroupPartition::contiguous(2, 2);
        let reg = RegularizerSpec::nuclear();
        let m = ModelSubspace::group_support(part, [0]).unwrap();
        let theta = ParamPoint::vector(array![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(reg.decompose_check(&m, &theta, &theta).is_err());
    }

    /// The squared compatibility constant: sampled ratios never exceed it and
    /// a witness attains it.
    #[test]
    fn compatibility_constant_is_sharp() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        // Group case: |S| = 3 out of 5 groups of size 2.
        let part = GroupPartition::contiguous(5, 2);
        let reg = RegularizerSpec::group_l2(part.clone());
        let m = ModelSubspace::group_support(part.clone(), [0, 2, 4]).unwrap();
        let bound = m.psi_sq().sqrt();
        let mut attained = 0.0_f64;
        for _ in 0..500 {
            let raw = ParamPoint::Vector(gauss_vec(&mut rng, 10));
            let u = m.project(&raw).unwrap();
            if u.norm() < 1e-12 {
                continue;
            }
            let ratio = reg.phi(&u).unwrap() / u.norm();
            assert!(ratio <= bound * (1.0 + 1e-9));
            attained = attained.max(ratio);
        }
        // Witness: equal block norms attain the bound exactly.
        let w = ParamPoint::vector(array![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let ratio = reg.phi(&w).unwrap() / w.norm();
        assert_abs_diff_eq!(ratio, bound, epsilon = 1e-12);
        assert!(attained <= bound * (1.0 + 1e-9));

        // Low-rank case: rank 2 in 4x5.
        let m2 = ModelSubspace::low_rank(
            linalg::orthonormal_cols(&gauss_mat(&mut rng, 4, 2).view()),
            linalg::orthonormal_cols(&gauss_mat(&mut rng, 5, 2).view()),
        )
        .unwrap();
        let reg_n = RegularizerSpec::nuclear();
        let bound2 = m2.psi_sq().sqrt();
        for _ in 0..500 {
            let raw = ParamPoint::Matrix(gauss_mat(&mut rng, 4, 5));
            let u = m2.project(&raw).unwrap();
            if u.norm() < 1e-12 {
                continue;
            }
            let ratio = reg_n.phi(&u).unwrap() / u.norm();
            assert!(ratio <= bound2 * (1.0 + 1e-9));
        }
        // Witness: U I V^T has both singular values equal.
        let (uf, vf) = m2.factors().unwrap();
        let w2 = ParamPoint::Matrix(uf.dot(&vf.t()));
        let ratio2 = reg_n.phi(&w2).unwrap() / w2.norm();
        assert_abs_diff_eq!(ratio2, bound2, epsilon = 1e-9);
    }
}
