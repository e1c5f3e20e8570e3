//! Restricted Boltzmann machines over K-ary word observations.
//!
//! Visible softmax groups are refreshed with independence-chain
//! Metropolis-Hastings using alias-table proposals, so a negative-phase
//! update costs the same whether the vocabulary holds a thousand words or
//! a hundred thousand. The crate also carries the exact (exponential-time)
//! oracles used to check that machinery on tiny models.
//!
//! Module map:
//!
//! * [`corpus`] text normalization, vocabulary, n-gram windows, unigram marginals
//! * [`alias`] O(1) categorical sampling
//! * [`rbm`] dense binary / softmax RBM with exact enumeration oracles
//! * [`mh`] the Metropolis-Hastings visible operator and its analytic kernel
//! * [`wrrbm`] the factored word-representation RBM
//! * [`trainer`] persistent-chain stochastic approximation
//! * [`diagnostics`] exact mixing curves (KL / TV against the true conditional)
//! * [`features`] embeddings, neighbors, hidden features, free-energy classification
//! * [`format`] binary model and window containers

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alias;
pub mod corpus;
pub mod diagnostics;
mod error;
pub mod exec;
pub mod features;
pub mod format;
pub mod linalg;
pub mod mh;
pub mod rbm;
pub mod trainer;
pub mod wrrbm;

pub use error::{Error, Result};
