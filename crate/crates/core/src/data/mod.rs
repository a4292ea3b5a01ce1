//! Datasets: LIBSVM parsing, client partitions and mini-batch sampling.

mod libsvm;
mod partition;
mod sampler;
pub mod synth;

pub use libsvm::{parse_libsvm, parse_libsvm_str, to_libsvm_string, Dataset, Sample, SparseVec};
pub use partition::{partition, Partition, PartitionMode};
pub use sampler::{BatchSampler, Which};
