//! Structure discovery for discrete Bayesian networks, single-task and
//! multitask.
//!
//! The library computes posterior probabilities of directed edges by summing
//! over node orders. Conditioned on an order, the posterior factors into
//! per-node sums over capped parent sets; summing over orders is done either
//! exactly with a subset-lattice dynamic program ([`exact`]) or approximately
//! with Metropolis-Hastings over orders ([`mcmc`]). When several related
//! datasets are available, [`taskset`] biases each task's family scores with
//! evidence from the other tasks through a geometric penalty on edge
//! additions ([`transfer`]), either at a fixed transfer strength or averaged
//! over all strengths in closed form.
//!
//! [`datagen`] handles benchmark networks, forward sampling, and the
//! edge-deletion protocol for generating families of related tasks;
//! [`evalrep`] scores recovered edge sets against a ground truth with
//! ROC/AUC and paired-t comparisons.

pub mod datagen;
pub mod evalrep;
pub mod exact;
pub mod logsum;
pub mod mcmc;
pub mod model;
pub mod scoring;
pub mod taskset;
pub mod transfer;

pub use model::{
    edit_delta, Dag, EdgePosteriorMatrix, Feature, Order, ParentSet, TaskData, TaskSet,
    VariableTable, MAX_VARS,
};
