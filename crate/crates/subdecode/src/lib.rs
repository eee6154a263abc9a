//! Erasure-coded distributed iterative computing with substitute decoding.
//!
//! When a large sparse linear-algebra iteration (power iteration, orthogonal
//! iteration, gradient descent) is distributed across workers and a random
//! subset of them fails each round, dense erasure codes would destroy the
//! sparsity of the stored data. This crate instead codes the computation with
//! extremely sparse (LDGM) time-varying generator matrices and recovers each
//! round by *substitute decoding*: project the received coded results onto the
//! row space of the surviving generator submatrix and substitute the unknown
//! orthogonal complement with the previous iterate.
//!
//! The crate is organised as:
//!
//! - [`kernel`]: small dense decompositions (SVD, QR, symmetric eigen) and
//!   compressed-row sparse products,
//! - [`codes`]: sparsity patterns, per-iteration Gaussian generators and the
//!   decoding bases derived from their SVD,
//! - [`splitting`]: row / column / SUMMA partitioning and worker storage,
//! - [`algorithms`]: the coded iteration engines and all baseline schemes,
//! - [`problems`]: PageRank systems, graph generators, least squares,
//! - [`simharness`]: deterministic master/worker simulation and metrics,
//! - [`verify`]: statistical checks of the convergence theory,
//! - [`config`]: the flat `key = value` experiment configuration format.
//!
//! Everything is deterministic given a master seed: randomness flows through
//! explicitly derived [`rand_chacha::ChaCha8Rng`] streams.

// Index loops over multiple coupled arrays are the clearest form for the
// numeric kernels here.
#![allow(clippy::needless_range_loop)]

pub mod algorithms;
pub mod seeding;
pub mod codes;
pub mod config;
pub mod error;
pub mod kernel;
pub mod problems;
pub mod simharness;
pub mod splitting;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
