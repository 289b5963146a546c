use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{GicError, Result};
use crate::linalg;
use crate::model::param::{ParamPoint, ParamShape};
use crate::model::partition::GroupPartition;

/// A candidate model: a linear subspace of parameter space.
///
/// * `GroupSupport`: vectors supported on a set `S` of groups of a fixed
///   partition. Here the pair `(M, M-bar)` coincides and the orthogonal
///   complement of `M-bar` is the span of the remaining groups.
/// * `LowRank`: matrices whose column span lies in `span(U)` and row span in
///   `span(V)`, i.e. `{ U A V^T }`. The complement used for decomposability is
///   `{ Z : U^T Z = 0, Z V = 0 }`.
#[derive(Clone, Debug)]
pub enum ModelSubspace {
    GroupSupport {
        partition: GroupPartition,
        support: BTreeSet<usize>,
    },
    LowRank { u: Array2<f64>, v: Array2<f64> },
}

/// Hashable identity of a subspace, used to collapse duplicates along a path.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubspaceKey {
    Group(Vec<usize>),
    Rank(usize),
}

fn check_orthonormal(m: &Array2<f64>, name: &str) -> Result<()> {
    let r = m.ncols();
    let gram = m.t().dot(m);
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)] - target).abs() > 1e-10 {
                return Err(GicError::InvalidArgument(format!(
                    "{name} must have orthonormal columns (deviation {:.3e} at ({i},{j}))",
                    (gram[(i, j)] - target).abs()
                )));
            }
        }
    }
    Ok(())
}

impl ModelSubspace {
    pub fn group_support<I: IntoIterator<Item = usize>>(
        partition: GroupPartition,
        support: I,
    ) -> Result<Self> {
        let support: BTreeSet<usize> = support.into_iter().collect();
        if let Some(&g) = support.iter().next_back() {
            if g >= partition.num_groups() {
                return Err(GicError::InvalidArgument(format!(
                    "support group {g} out of range (partition has {} groups)",
                    partition.num_groups()
                )));
            }
        }
        Ok(ModelSubspace::GroupSupport { partition, support })
    }

    /// Low-rank subspace from orthonormal factors `u: p1 x r`, `v: p2 x r`.
    pub fn low_rank(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(GicError::InvalidShape(format!(
                "u has {} columns but v has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        if u.ncols() > u.nrows().min(v.nrows()) {
            return Err(GicError::InvalidShape(format!(
                "rank {} exceeds min({}, {})",
                u.ncols(),
                u.nrows(),
                v.nrows()
            )));
        }
        check_orthonormal(&u, "u")?;
        check_orthonormal(&v, "v")?;
        Ok(ModelSubspace::LowRank { u, v })
    }

    /// The zero subspace of rank 0 over `p1 x p2` matrices.
    pub fn zero_matrix(p1: usize, p2: usize) -> Self {
        ModelSubspace::LowRank {
            u: Array2::zeros((p1, 0)),
            v: Array2::zeros((p2, 0)),
        }
    }

    pub fn ambient_shape(&self) -> ParamShape {
        match self {
            ModelSubspace::GroupSupport { partition, .. } => ParamShape::Vector(partition.dim()),
            ModelSubspace::LowRank { u, v } => ParamShape::Matrix(u.nrows(), v.nrows()),
        }
    }

    /// Squared subspace compatibility constant of the pair `(M, M-bar)` for
    /// the matching norm: `|S|` for group supports, `r` for low rank.
    pub fn psi_sq(&self) -> f64 {
        match self {
            ModelSubspace::GroupSupport { support, .. } => support.len() as f64,
            ModelSubspace::LowRank { u, .. } => u.ncols() as f64,
        }
    }

    /// Number of active groups, or the rank.
    pub fn complexity(&self) -> usize {
        match self {
            ModelSubspace::GroupSupport { support, .. } => support.len(),
            ModelSubspace::LowRank { u, .. } => u.ncols(),
        }
    }

    pub fn support(&self) -> Option<&BTreeSet<usize>> {
        match self {
            ModelSubspace::GroupSupport { support, .. } => Some(support),
            ModelSubspace::LowRank { .. } => None,
        }
    }

    /// Sorted coordinate indices covered by the active groups.
    pub fn active_coordinates(&self) -> Option<Vec<usize>> {
        match self {
            ModelSubspace::GroupSupport { partition, support } => {
                let mut idx: Vec<usize> = support
                    .iter()
                    .flat_map(|&g| partition.group(g).iter().copied())
                    .collect();
                idx.sort_unstable();
                Some(idx)
            }
            ModelSubspace::LowRank { .. } => None,
        }
    }

    pub fn factors(&self) -> Option<(&Array2<f64>, &Array2<f64>)> {
        match self {
            ModelSubspace::LowRank { u, v } => Some((u, v)),
            ModelSubspace::GroupSupport { .. } => None,
        }
    }

    pub fn key(&self) -> SubspaceKey {
        match self {
            ModelSubspace::GroupSupport { support, .. } => {
                SubspaceKey::Group(support.iter().copied().collect())
            }
            ModelSubspace::LowRank { u, .. } => SubspaceKey::Rank(u.ncols()),
        }
    }

    fn check_ambient(&self, point: &ParamPoint) -> Result<()> {
        if point.shape() != self.ambient_shape() {
            return Err(GicError::InvalidShape(format!(
                "parameter shape {:?} does not match subspace ambient shape {:?}",
                point.shape(),
                self.ambient_shape()
            )));
        }
        Ok(())
    }

    /// Orthogonal projection onto the subspace `M`.
    pub fn project(&self, point: &ParamPoint) -> Result<ParamPoint> {
        self.check_ambient(point)?;
        match self {
            ModelSubspace::GroupSupport { partition, support } => {
                let v = point.as_vector()?;
                let mut out = ndarray::Array1::zeros(v.len());
                for &g in support {
                    for &j in partition.group(g) {
                        out[j] = v[j];
                    }
                }
                Ok(ParamPoint::Vector(out))
            }
            ModelSubspace::LowRank { u, v } => {
                let z = point.as_matrix()?;
                if u.ncols() == 0 {
                    return Ok(ParamPoint::Matrix(Array2::zeros(z.dim())));
                }
                let proj = u.dot(&u.t().dot(&z.dot(v)).dot(&v.t()));
                Ok(ParamPoint::Matrix(proj))
            }
        }
    }

    /// Orthogonal projection onto the complement subspace used in the
    /// decomposability identity: the span of the inactive groups, or
    /// `{ Z : U^T Z = 0, Z V = 0 }` for low rank.
    pub fn project_mbar_perp(&self, point: &ParamPoint) -> Result<ParamPoint> {
        self.check_ambient(point)?;
        match self {
            ModelSubspace::GroupSupport { partition, support } => {
                let v = point.as_vector()?;
                let mut out = v.clone();
                for &g in support {
                    for &j in partition.group(g) {
                        out[j] = 0.0;
                    }
                }
                Ok(ParamPoint::Vector(out))
            }
            ModelSubspace::LowRank { u, v } => {
                let z = point.as_matrix()?;
                if u.ncols() == 0 {
                    return Ok(ParamPoint::Matrix(z.clone()));
                }
                // (I - U U^T) Z (I - V V^T)
                let zv = z - &u.dot(&u.t().dot(z));
                let out = &zv - &zv.dot(v).dot(&v.t());
                Ok(ParamPoint::Matrix(out))
            }
        }
    }

    /// Whether `point` lies in the subspace up to `tol * (1 + ||point||)`.
    pub fn contains(&self, point: &ParamPoint, tol: f64) -> Result<bool> {
        let proj = self.project(point)?;
        Ok(point.sub(&proj).norm() <= tol * (1.0 + point.norm()))
    }

    /// Smallest "atom" of a parameter seen through this subspace: the minimum
    /// active-group norm, or the `r`-th singular value. Infinite for the zero
    /// subspace (the signal condition is vacuous there).
    pub fn min_atom_signal(&self, point: &ParamPoint) -> Result<f64> {
        self.check_ambient(point)?;
        match self {
            ModelSubspace::GroupSupport { partition, support } => {
                let v = point.as_vector()?;
                Ok(support
                    .iter()
                    .map(|&g| partition.group_norm(g, &v.view()))
                    .fold(f64::INFINITY, f64::min))
            }
            ModelSubspace::LowRank { u, .. } => {
                let r = u.ncols();
                if r == 0 {
                    return Ok(f64::INFINITY);
                }
                let svd = linalg::thin_svd(&point.as_matrix()?.view());
                Ok(svd.s[r - 1])
            }
        }
    }

    /// Structural equality of models. Group supports compare exactly. Low-rank
    /// subspaces compare by rank, and additionally by the largest principal
    /// angle of both factors when `angle_tol` is given.
    pub fn same_subspace(&self, other: &ModelSubspace, angle_tol: Option<f64>) -> bool {
        match (self, other) {
            (
                ModelSubspace::GroupSupport { partition: p1, support: s1 },
                ModelSubspace::GroupSupport { partition: p2, support: s2 },
            ) => p1 == p2 && s1 == s2,
            (
                ModelSubspace::LowRank { u: u1, v: v1 },
                ModelSubspace::LowRank { u: u2, v: v2 },
            ) => {
                if u1.ncols() != u2.ncols() || u1.nrows() != u2.nrows() || v1.nrows() != v2.nrows()
                {
                    return false;
                }
                match angle_tol {
                    None => true,
                    Some(tol) => {
                        linalg::subspace_max_sin(&u1.view(), &u2.view()) <= tol
                            && linalg::subspace_max_sin(&v1.view(), &v2.view()) <= tol
                    }
                }
            }
            _ => false,
        }
    }

    /// Report-oriented JSON: `{"variant":"group","S":[...]}` or
    /// `{"variant":"lowrank","r":r,"U":[[..]],"V":[[..]]}`.
    pub fn to_report_json(&self) -> serde_json::Value {
        match self {
            ModelSubspace::GroupSupport { support, .. } => serde_json::json!({
                "variant": "group",
                "S": support.iter().copied().collect::<Vec<usize>>(),
            }),
            ModelSubspace::LowRank { u, v } => {
                let rows = |m: &Array2<f64>| -> Vec<Vec<f64>> {
                    m.outer_iter().map(|r| r.to_vec()).collect()
                };
                serde_json::json!({
                    "variant": "lowrank",
                    "r": u.ncols(),
                    "U": rows(u),
                    "V": rows(v),
                })
            }
        }
    }
}
