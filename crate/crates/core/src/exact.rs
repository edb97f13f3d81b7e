//! Exact edge posteriors by dynamic programming over the subset lattice.
//!
//! Three stages: per-node beta tables come in from scoring (or the transfer
//! bias), a truncated upward zeta transform turns them into alpha tables
//! (for every candidate-parent pool U, the summed weight of all capped
//! parent sets inside U), and two lattice sweeps sum the per-order products
//! over all n! orders without enumerating them. Edge numerators for one
//! child all come from a single superset-sum transform of that child's
//! lattice weights, so the full n(n-1) matrix costs O(n^2 2^n).

use rayon::prelude::*;
use thiserror::Error;

use crate::logsum::{log_add_exp, log_sum_exp};
use crate::model::EdgePosteriorMatrix;
use crate::scoring::FamilyScoreTable;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{n} nodes exceeds the exact-engine ceiling of {max}; raise the ceiling explicitly or use the MCMC engine")]
    ExceedsCeiling { n: usize, max: usize },
    #[error("need one score table per node (got {got}, expected {expected})")]
    TableCountMismatch { got: usize, expected: usize },
}

/// Exact-engine limits. The ceiling guards against accidentally asking for a
/// 2^n-sized computation; it can be raised deliberately.
#[derive(Debug, Clone)]
pub struct ExactConfig {
    pub max_nodes: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { max_nodes: 25 }
    }
}

/// Per-node alpha table: for each subset U of the other nodes (compressed
/// indexing, node bit removed), the log-sum of beta over capped parent sets
/// inside U.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    node: usize,
    values: Vec<f64>,
}

impl AlphaTable {
    pub fn node(&self) -> usize {
        self.node
    }

    /// Lookup by full-width mask over all nodes; `universe` must not contain
    /// the table's node.
    pub fn get(&self, universe: u64) -> f64 {
        debug_assert_eq!(universe >> self.node & 1, 0);
        self.values[compress(universe, self.node)]
    }
}

/// Drop the node's own bit position from a full-width mask.
#[inline]
fn compress(mask: u64, node: usize) -> usize {
    let low = mask & ((1u64 << node) - 1);
    (low | (mask >> (node + 1)) << node) as usize
}

/// Inverse of `compress`.
#[inline]
fn expand(cmask: usize, node: usize) -> u64 {
    let c = cmask as u64;
    let low = c & ((1u64 << node) - 1);
    low | (c >> node) << (node + 1)
}

/// Upward (zeta) sweep of a node's beta table over the subset lattice,
/// truncated to the in-degree cap by initializing only capped entries.
pub fn zeta_transform_truncated(beta: &FamilyScoreTable, n: usize) -> AlphaTable {
    let node = beta.node();
    let size = 1usize << (n - 1);
    let mut values = vec![f64::NEG_INFINITY; size];
    for (parents, v) in beta.iter() {
        values[compress(parents.mask(), node)] = v;
    }
    for bit in 0..n - 1 {
        let step = 1usize << bit;
        for s in 0..size {
            if s & step != 0 {
                values[s] = log_add_exp(values[s], values[s ^ step]);
            }
        }
    }
    AlphaTable { node, values }
}

fn check(betas: &[FamilyScoreTable], cfg: &ExactConfig) -> Result<usize, EngineError> {
    let n = betas.len();
    if n > cfg.max_nodes {
        return Err(EngineError::ExceedsCeiling { n, max: cfg.max_nodes });
    }
    for (i, b) in betas.iter().enumerate() {
        if b.node() != i {
            return Err(EngineError::TableCountMismatch { got: b.node(), expected: i });
        }
    }
    Ok(n)
}

/// Forward lattice weights: g[S] = log of the summed weight of every way to
/// lay out the nodes of S as an order prefix. Ascending-mask iteration is a
/// valid topological order of the lattice and fixes the summation order.
fn forward_weights(alphas: &[AlphaTable], n: usize) -> Vec<f64> {
    let full = 1usize << n;
    let mut g = vec![f64::NEG_INFINITY; full];
    g[0] = 0.0;
    let mut terms = Vec::with_capacity(n);
    for s in 1..full {
        terms.clear();
        let mut rest = s;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let prev = s & !(1 << i);
            terms.push(g[prev] + alphas[i].get(prev as u64));
        }
        g[s] = log_sum_exp(&terms);
    }
    g
}

/// Backward lattice weights: h[S] = log of the summed weight of every way to
/// finish an order whose prefix set is S.
fn backward_weights(alphas: &[AlphaTable], n: usize) -> Vec<f64> {
    let full = 1usize << n;
    let mut h = vec![f64::NEG_INFINITY; full];
    h[full - 1] = 0.0;
    let mut terms = Vec::with_capacity(n);
    for s in (0..full - 1).rev() {
        terms.clear();
        let mut rest = (full - 1) & !s;
        while rest != 0 {
            let w = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            terms.push(alphas[w].get(s as u64) + h[s | 1 << w]);
        }
        h[s] = log_sum_exp(&terms);
    }
    h
}

/// Posterior probability of every directed edge under the order-modular
/// posterior with a uniform prior over orders.
pub fn edge_posteriors_exact(
    betas: &[FamilyScoreTable],
    cfg: &ExactConfig,
) -> Result<EdgePosteriorMatrix, EngineError> {
    let n = check(betas, cfg)?;
    if n == 1 {
        return Ok(EdgePosteriorMatrix::zeros(1));
    }
    let alphas: Vec<AlphaTable> =
        betas.par_iter().map(|b| zeta_transform_truncated(b, n)).collect();
    let g = forward_weights(&alphas, n);
    let h = backward_weights(&alphas, n);
    let log_z = g[(1usize << n) - 1];

    // One column of numerators per child; columns are independent.
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut w = child_lattice_weights(&g, &h, n, v);
            superset_sums(&mut w, n - 1);
            let mut num = vec![f64::NEG_INFINITY; n];
            for (parents, b) in betas[v].iter() {
                let val = b + w[compress(parents.mask(), v)];
                for u in parents.iter() {
                    num[u] = log_add_exp(num[u], val);
                }
            }
            num
        })
        .collect();

    let mut out = EdgePosteriorMatrix::zeros(n);
    for v in 0..n {
        for u in 0..n {
            if u == v {
                continue;
            }
            let p = (columns[v][u] - log_z).exp();
            out.set(u, v, clamp_probability(p, u, v));
        }
    }
    Ok(out)
}

/// Lattice weight of each candidate pool S for child v: prefix weight of S
/// times suffix weight of S plus v. Compressed over the other n-1 bits.
fn child_lattice_weights(g: &[f64], h: &[f64], n: usize, v: usize) -> Vec<f64> {
    let size = 1usize << (n - 1);
    let mut w = vec![f64::NEG_INFINITY; size];
    let vbit = 1usize << v;
    for (c, slot) in w.iter_mut().enumerate() {
        let full = expand(c, v) as usize;
        *slot = g[full] + h[full | vbit];
    }
    w
}

/// In-place superset sums in log space: w[S] <- logsum over T >= S of w[T].
fn superset_sums(w: &mut [f64], bits: usize) {
    for bit in 0..bits {
        let step = 1usize << bit;
        for s in 0..w.len() {
            if s & step == 0 {
                w[s] = log_add_exp(w[s], w[s | step]);
            }
        }
    }
}

fn clamp_probability(p: f64, u: usize, v: usize) -> f64 {
    if !(-1e-12..=1.0 + 1e-12).contains(&p) {
        log::warn!("edge posterior {p} for {u}->{v} outside [0,1]; clamping");
    }
    p.clamp(0.0, 1.0)
}

/// log sum over orders of P(order) P(D | order), with the uniform order
/// prior 1/n! folded in.
pub fn marginal_log_evidence(
    betas: &[FamilyScoreTable],
    cfg: &ExactConfig,
) -> Result<f64, EngineError> {
    let n = check(betas, cfg)?;
    let alphas: Vec<AlphaTable> =
        betas.par_iter().map(|b| zeta_transform_truncated(b, n)).collect();
    let g = forward_weights(&alphas, n);
    let ln_factorial: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    Ok(g[(1usize << n) - 1] - ln_factorial)
}
