//! Metropolis-Hastings over node orders for networks past the exact
//! ceiling. Conditioned on an order the edge posteriors are computed
//! exactly from the beta tables; the chain averages those conditional
//! posteriors over sampled orders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::logsum::{log_add_exp, log_sum_exp};
use crate::model::{EdgePosteriorMatrix, Order, ParentSet};
use crate::scoring::FamilyScoreTable;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("total_samples and thin_interval must be positive")]
    DegenerateConfig,
    #[error("adjacent proposal probability {0} outside [0, 1]")]
    BadProposalMix(f64),
}

/// Chain hyperparameters. `total_samples` counts recorded states; the chain
/// runs `burn_in + total_samples * thin_interval` steps overall.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub total_samples: usize,
    pub thin_interval: usize,
    pub seed: u64,
    /// Probability of proposing an adjacent transposition; the rest are
    /// uniformly random position pairs. Both are symmetric proposals.
    pub adjacent_prob: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { burn_in: 1000, total_samples: 100, thin_interval: 10, seed: 0, adjacent_prob: 0.75 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.total_samples == 0 || self.thin_interval == 0 {
            return Err(McmcError::DegenerateConfig);
        }
        if !(0.0..=1.0).contains(&self.adjacent_prob) {
            return Err(McmcError::BadProposalMix(self.adjacent_prob));
        }
        Ok(())
    }
}

/// One recorded chain state.
#[derive(Debug, Clone)]
pub struct OrderSample {
    pub order: Order,
    pub log_score: f64,
}

/// Per-node sum of beta over capped parent sets drawn from `universe`,
/// by direct enumeration of the node's table (no 2^n structures).
fn node_local_score(beta: &FamilyScoreTable, universe: ParentSet, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    for (parents, v) in beta.iter() {
        if parents.is_subset_of(universe) {
            scratch.push(v);
        }
    }
    log_sum_exp(scratch)
}

/// log P(D | order): sum over nodes of the local subset sums restricted to
/// each node's predecessors.
pub fn order_log_score(order: &Order, betas: &[FamilyScoreTable]) -> f64 {
    let mut scratch = Vec::new();
    (0..order.n())
        .map(|i| node_local_score(&betas[i], order.predecessors(i), &mut scratch))
        .sum()
}

/// Exact conditional edge posteriors for one order. Entries for parents that
/// do not precede the child are zero.
pub fn edge_posteriors_given_order(
    order: &Order,
    betas: &[FamilyScoreTable],
) -> EdgePosteriorMatrix {
    let n = order.n();
    let mut out = EdgePosteriorMatrix::zeros(n);
    let mut terms = Vec::new();
    let mut num = vec![f64::NEG_INFINITY; n];
    for v in 0..n {
        let universe = order.predecessors(v);
        terms.clear();
        num.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        for (parents, b) in betas[v].iter() {
            if parents.is_subset_of(universe) {
                terms.push(b);
                for u in parents.iter() {
                    num[u] = log_add_exp(num[u], b);
                }
            }
        }
        let denom = log_sum_exp(&terms);
        for u in universe.iter() {
            out.set(u, v, (num[u] - denom).exp().clamp(0.0, 1.0));
        }
    }
    out
}

/// A running Metropolis-Hastings chain over orders. Exposed so that callers
/// can drive steps directly (diagnostics, pooled multi-chain runs).
pub struct OrderChain<'a> {
    betas: &'a [FamilyScoreTable],
    order: Order,
    node_scores: Vec<f64>,
    adjacent_prob: f64,
    scratch: Vec<f64>,
    accepted: u64,
    proposed: u64,
}

impl<'a> OrderChain<'a> {
    pub fn new(betas: &'a [FamilyScoreTable], order: Order, adjacent_prob: f64) -> Self {
        let mut scratch = Vec::new();
        let node_scores: Vec<f64> = (0..order.n())
            .map(|i| node_local_score(&betas[i], order.predecessors(i), &mut scratch))
            .collect();
        Self { betas, order, node_scores, adjacent_prob, scratch, accepted: 0, proposed: 0 }
    }

    pub fn order(&self) -> &Order {
        &self.order
    }

    pub fn log_score(&self) -> f64 {
        self.node_scores.iter().sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Score change from swapping adjacent positions p and p+1, plus the two
    /// refreshed node scores. Only the swapped nodes' predecessor pools move.
    fn adjacent_delta(&mut self, p: usize) -> (f64, f64, f64) {
        let a = self.order.var_at(p);
        let b = self.order.var_at(p + 1);
        let below = self.order.predecessors(a); // shared prefix before position p
        let new_b = node_local_score(&self.betas[b], below, &mut self.scratch);
        let new_a = node_local_score(&self.betas[a], below.with(b), &mut self.scratch);
        let delta = new_a + new_b - self.node_scores[a] - self.node_scores[b];
        (new_a, new_b, delta)
    }

    /// One Metropolis-Hastings step; returns whether the proposal was
    /// accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let n = self.order.n();
        if n < 2 {
            return false;
        }
        self.proposed += 1;
        if rng.random::<f64>() < self.adjacent_prob {
            let p = rng.random_range(0..n - 1);
            let a = self.order.var_at(p);
            let b = self.order.var_at(p + 1);
            let (new_a, new_b, delta) = self.adjacent_delta(p);
            if accept(delta, rng) {
                self.order.swap_positions(p, p + 1);
                self.node_scores[a] = new_a;
                self.node_scores[b] = new_b;
                self.accepted += 1;
                return true;
            }
            false
        } else {
            let p = rng.random_range(0..n);
            let mut q = rng.random_range(0..n - 1);
            if q >= p {
                q += 1;
            }
            self.order.swap_positions(p, q);
            let fresh: Vec<f64> = (0..n)
                .map(|i| {
                    node_local_score(&self.betas[i], self.order.predecessors(i), &mut self.scratch)
                })
                .collect();
            let delta: f64 =
                fresh.iter().sum::<f64>() - self.node_scores.iter().sum::<f64>();
            if accept(delta, rng) {
                self.node_scores = fresh;
                self.accepted += 1;
                true
            } else {
                self.order.swap_positions(p, q);
                false
            }
        }
    }
}

fn accept<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> bool {
    delta >= 0.0 || rng.random::<f64>() < delta.exp()
}

/// Full sampler: random start, burn-in, thinned recording, and the
/// probability-space average of the per-order conditional posteriors.
/// Deterministic given the seed.
pub fn run_order_mcmc(
    betas: &[FamilyScoreTable],
    cfg: &McmcConfig,
) -> Result<EdgePosteriorMatrix, McmcError> {
    run_order_mcmc_with_samples(betas, cfg).map(|(m, _)| m)
}

pub fn run_order_mcmc_with_samples(
    betas: &[FamilyScoreTable],
    cfg: &McmcConfig,
) -> Result<(EdgePosteriorMatrix, Vec<OrderSample>), McmcError> {
    cfg.validate()?;
    let n = betas.len();
    if n == 1 {
        let order = Order::identity(1);
        let m = edge_posteriors_given_order(&order, betas);
        let log_score = order_log_score(&order, betas);
        return Ok((m, vec![OrderSample { order, log_score }]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Order::random(n, &mut rng);
    let mut chain = OrderChain::new(betas, start, cfg.adjacent_prob);
    for _ in 0..cfg.burn_in {
        chain.step(&mut rng);
    }
    let mut acc = vec![0.0f64; n * n];
    let mut samples = Vec::with_capacity(cfg.total_samples);
    for _ in 0..cfg.total_samples {
        for _ in 0..cfg.thin_interval {
            chain.step(&mut rng);
        }
        let m = edge_posteriors_given_order(chain.order(), betas);
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    acc[u * n + v] += m.get(u, v);
                }
            }
        }
        samples.push(OrderSample { order: chain.order().clone(), log_score: chain.log_score() });
    }
    log::debug!("order-MCMC acceptance rate {:.3}", chain.acceptance_rate());
    let mut out = EdgePosteriorMatrix::zeros(n);
    let t = cfg.total_samples as f64;
    for u in 0..n {
        for v in 0..n {
            if u != v {
                out.set(u, v, acc[u * n + v] / t);
            }
        }
    }
    Ok((out, samples))
}
