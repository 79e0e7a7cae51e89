//! Type-based multiple access (TBMA) for remote estimation: sensors share a
//! codebook, the fusion center sees the superposition of their codewords,
//! and a neural estimator recovers the target value.
//!
//! The crate covers the whole pipeline: source and channel simulation
//! ([`system_model`]), power-constrained codebooks ([`codebook`]), neural and
//! likelihood-based estimators ([`decoder`]), the variational
//! information-bottleneck training loop ([`training`]), clique-based codeword
//! compression ([`clustering`]) and the four end-to-end protocols
//! ([`protocols`]). Everything numeric sits on the small kernel in
//! [`mathkit`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod codebook;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod mathkit;
pub mod protocols;
pub mod system_model;
pub mod training;

pub use error::{Error, Result};
