//! Sparse plus low-rank slim-tensor factorization for multi-view clustering.
//!
//! Each view `X^v` (features × samples) is factorized as `W^v (S^v + H^v)`,
//! where the sparse part `S^v` soaks up view-specific nuisance and the
//! low-rank part `H^v` carries the cluster structure. The per-view latent
//! matrices are stacked into `k × m × n` slim tensors; `H` is regularized
//! with the t-SVD tensor nuclear norm and aligned across views through a
//! shared column-stochastic indicator `Y`, which is finally clustered with
//! k-means.
//!
//! Module map:
//! - [`data`]: datasets, file formats, normalization, synthetic generation
//! - [`linalg`]: thin SVD, Procrustes, soft-thresholding, SVT
//! - [`slimtensor`]: stack/rotate, mode-3 FFT, tensor nuclear norm, tubal shrinkage
//! - [`simplex`]: Euclidean projection onto the probability simplex
//! - [`solver`]: objective, block updates and the alternating loop
//! - [`kmeans`]: seeded k-means++ with restarts
//! - [`metrics`]: ACC, NMI, purity, ARI, pairwise F-score
//! - [`cli`]: the `dstl` command-line front end

pub mod cli;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod linalg;
pub mod memtrack;
pub mod metrics;
pub mod simplex;
pub mod slimtensor;
pub mod solver;

pub use error::{Error, Result};
