use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{GicError, Result};

/// A partition of coordinate indices `0..p` into disjoint, non-empty groups.
///
/// Groups are stored with their member indices sorted; the partition must
/// cover every coordinate exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    pub fn new(mut groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(GicError::InvalidArgument("partition has no groups".into()));
        }
        let mut all: Vec<usize> = Vec::new();
        for g in &mut groups {
            if g.is_empty() {
                return Err(GicError::InvalidArgument("partition contains an empty group".into()));
            }
            g.sort_unstable();
            all.extend_from_slice(g);
        }
        let dim = all.len();
        all.sort_unstable();
        for (expect, &got) in all.iter().enumerate() {
            if expect != got {
                return Err(GicError::InvalidArgument(format!(
                    "groups must partition 0..{dim} exactly; index {got} is duplicated or out of range"
                )));
            }
        }
        Ok(GroupPartition { groups, dim })
    }

    /// One group per coordinate (elementwise L1 is group-L2 over singletons).
    pub fn singletons(p: usize) -> Self {
        GroupPartition {
            groups: (0..p).map(|j| vec![j]).collect(),
            dim: p,
        }
    }

    /// `num_groups` contiguous groups of `group_size` coordinates each.
    pub fn contiguous(num_groups: usize, group_size: usize) -> Self {
        let groups = (0..num_groups)
            .map(|g| (g * group_size..(g + 1) * group_size).collect())
            .collect();
        GroupPartition {
            groups,
            dim: num_groups * group_size,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Ambient dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    /// Euclidean norm of the coordinates of `v` belonging to group `g`.
    pub fn group_norm(&self, g: usize, v: &ArrayView1<f64>) -> f64 {
        self.groups[g]
            .iter()
            .map(|&j| v[j] * v[j])
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupPartition {
    type Error = GicError;
    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        GroupPartition::new(groups)
    }
}

impl From<GroupPartition> for Vec<Vec<usize>> {
    fn from(p: GroupPartition) -> Self {
        p.groups
    }
}
