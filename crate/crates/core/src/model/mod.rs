//! Parameter points, group partitions, candidate model subspaces, and
//! decomposable regularizers.

pub mod param;
pub mod partition;
pub mod regularizer;
pub mod subspace;

pub use param::{ParamPoint, ParamShape};
pub use partition::GroupPartition;
pub use regularizer::RegularizerSpec;
pub use subspace::{ModelSubspace, SubspaceKey};
