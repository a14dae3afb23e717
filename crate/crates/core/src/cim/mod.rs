//! Device-agnostic compute-in-memory abstraction: lowering from tensor ops,
//! execute-block fusion, similarity recognition and partitioning.

mod fuse;
mod lower;
mod partition;
mod pattern;

pub use fuse::fuse_ops;
pub use lower::lower_tensor_to_cim;
pub use partition::partition;
pub use pattern::{isomorphic, similarity_matching, Dfg, SimilarityPattern};
