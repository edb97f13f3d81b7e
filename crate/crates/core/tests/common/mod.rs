//! Shared brute-force oracles for the integration and acceptance suites.
//!
//! Everything here recomputes posteriors from first principles: enumerate
//! node orders explicitly, enumerate parent-set vectors (and cross-task
//! pairs of vectors) consistent with each order, and add up leaf weights.
//! None of it touches the lattice dynamic program, the zeta transform, or
//! the biased-score builder it is used to check.

#![allow(dead_code)]

use itertools::Itertools;
use netdisco::model::{EdgePosteriorMatrix, Order, TaskData, VariableTable};
use netdisco::scoring::FamilyScoreTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random categorical data for oracle grids.
pub fn random_task(n: usize, arities: &[usize], m: usize, seed: u64) -> (VariableTable, TaskData) {
    let names = (0..n).map(|i| format!("x{i}")).collect();
    let vars = VariableTable::new(names, arities.to_vec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..m)
        .map(|_| (0..n).map(|c| rng.random_range(0..vars.arity(c)) as u8).collect())
        .collect();
    let data = TaskData::new(0, &vars, rows).unwrap();
    (vars, data)
}

/// Walk the product space of per-node choices, calling `visit` with the
/// current index vector and the product of the chosen weights. Iterative
/// odometer: only suffix products are refreshed on each step.
fn product_enumerate(
    sizes: &[usize],
    weight: impl Fn(usize, usize) -> f64,
    mut visit: impl FnMut(&[usize], f64),
) {
    let n = sizes.len();
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; n];
    let mut prefix = vec![1.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * weight(i, 0);
    }
    loop {
        visit(&idx, prefix[n]);
        let mut d = n;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < sizes[d] {
                break;
            }
            idx[d] = 0;
        }
        for i in d..n {
            prefix[i + 1] = prefix[i] * weight(i, idx[i]);
        }
    }
}

fn entry_list(t: &FamilyScoreTable) -> Vec<(u64, f64)> {
    t.iter().map(|(p, v)| (p.mask(), v)).collect()
}

fn max_value(entries: &[(u64, f64)]) -> f64 {
    entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max)
}

/// Exhaustive order-and-structure posterior: for every permutation, every
/// vector of capped parent sets drawn from each node's predecessors, add the
/// product of (shifted) weights into the denominator and into the mass of
/// the chosen set at each node. Edge numerators come from the per-node
/// masses at the end.
pub fn stl_oracle(betas: &[FamilyScoreTable]) -> EdgePosteriorMatrix {
    let n = betas.len();
    let entries: Vec<Vec<(u64, f64)>> = betas.iter().map(entry_list).collect();
    let shift: Vec<f64> = entries.iter().map(|e| max_value(e)).collect();
    let mut den = 0.0f64;
    // mass[v][j]: total weight of outcomes where node v chose entry j
    let mut mass: Vec<Vec<f64>> = entries.iter().map(|e| vec![0.0; e.len()]).collect();
    for perm in (0..n).permutations(n) {
        let order = Order::new(perm).unwrap();
        let mut choice_w: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut choice_j: Vec<Vec<usize>> = Vec::with_capacity(n);
        for i in 0..n {
            let pool = order.predecessors(i).mask();
            let mut w = Vec::new();
            let mut j_of = Vec::new();
            for (j, &(m, v)) in entries[i].iter().enumerate() {
                if m & !pool == 0 {
                    w.push((v - shift[i]).exp());
                    j_of.push(j);
                }
            }
            choice_w.push(w);
            choice_j.push(j_of);
        }
        let sizes: Vec<usize> = choice_w.iter().map(|c| c.len()).collect();
        product_enumerate(
            &sizes,
            |i, c| choice_w[i][c],
            |idx, w| {
                den += w;
                for v in 0..n {
                    mass[v][choice_j[v][idx[v]]] += w;
                }
            },
        );
    }
    masses_to_matrix(&entries, &mass, den, n)
}

fn masses_to_matrix(
    entries: &[Vec<(u64, f64)>],
    mass: &[Vec<f64>],
    den: f64,
    n: usize,
) -> EdgePosteriorMatrix {
    let mut out = EdgePosteriorMatrix::zeros(n);
    for v in 0..n {
        for u in 0..n {
            if u == v {
                continue;
            }
            let num: f64 = entries[v]
                .iter()
                .zip(&mass[v])
                .filter(|((m, _), _)| m >> u & 1 == 1)
                .map(|(_, &w)| w)
                .sum();
            out.set(u, v, num / den);
        }
    }
    out
}

/// log of the evidence sum over orders with the uniform 1/n! prior, by
/// direct enumeration.
pub fn evidence_oracle(betas: &[FamilyScoreTable]) -> f64 {
    let n = betas.len();
    let entries: Vec<Vec<(u64, f64)>> = betas.iter().map(entry_list).collect();
    let shift: Vec<f64> = entries.iter().map(|e| max_value(e)).collect();
    let mut total = 0.0f64;
    let mut count = 0usize;
    for perm in (0..n).permutations(n) {
        count += 1;
        let order = Order::new(perm).unwrap();
        let mut prod = 1.0f64;
        for i in 0..n {
            let pool = order.predecessors(i).mask();
            let local: f64 = entries[i]
                .iter()
                .filter(|(m, _)| m & !pool == 0)
                .map(|&(_, v)| (v - shift[i]).exp())
                .sum();
            prod *= local;
        }
        total += prod;
    }
    total.ln() + shift.iter().sum::<f64>() - (count as f64).ln()
}

/// Which parent sets the donor task's sums range over.
///
/// `WithinOrderPool` keeps the factorization identity in its original form: both tasks'
/// sets come from the order's predecessor pools. `FullCappedUniverse` is how
/// biased scores must be precomputed (order-independent donor sums with the
/// prior conditioned on the maximal pool n-1); the engine implements that
/// reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DonorRange {
    WithinOrderPool,
    FullCappedUniverse,
}

struct MtlTables {
    e1: Vec<Vec<(u64, f64)>>,
    e2: Vec<Vec<(u64, f64)>>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    prior: Vec<f64>,
}

impl MtlTables {
    fn new(
        lik1: &[FamilyScoreTable],
        lik2: &[FamilyScoreTable],
        log_prior_by_delta: &[f64],
    ) -> Self {
        let e1: Vec<Vec<(u64, f64)>> = lik1.iter().map(entry_list).collect();
        let e2: Vec<Vec<(u64, f64)>> = lik2.iter().map(entry_list).collect();
        let s1 = e1.iter().map(|e| max_value(e)).collect();
        let s2 = e2.iter().map(|e| max_value(e)).collect();
        let prior = log_prior_by_delta.iter().map(|&v| v.exp()).collect();
        Self { e1, e2, s1, s2, prior }
    }
}

/// One order's denominator and per-edge numerators (shifted probability
/// space) by the literal double sum: enumerate every combination of a
/// learner parent-set vector and a donor parent-set vector, weigh each leaf
/// by likelihoods and the joint prior at every node, and add it up.
fn per_order_unfactored(
    t: &MtlTables,
    order: &Order,
    range: DonorRange,
) -> (f64, Vec<Vec<f64>>) {
    let n = order.n();
    let mut pair_w: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pair_j1: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let pool = order.predecessors(i).mask();
        let allowed1: Vec<(usize, u64, f64)> = t.e1[i]
            .iter()
            .enumerate()
            .filter(|(_, (m, _))| m & !pool == 0)
            .map(|(j, &(m, v))| (j, m, (v - t.s1[i]).exp()))
            .collect();
        let donors: Vec<(u64, f64)> = t.e2[i]
            .iter()
            .filter(|(m, _)| range == DonorRange::FullCappedUniverse || m & !pool == 0)
            .map(|&(m, v)| (m, (v - t.s2[i]).exp()))
            .collect();
        let mut w = Vec::with_capacity(allowed1.len() * donors.len());
        let mut j1 = Vec::with_capacity(w.capacity());
        for &(j, m1, w1) in &allowed1 {
            for &(m2, w2) in &donors {
                let delta = (m1 & !m2).count_ones() as usize;
                w.push(w1 * w2 * t.prior[delta]);
                j1.push(j);
            }
        }
        pair_w.push(w);
        pair_j1.push(j1);
    }
    let sizes: Vec<usize> = pair_w.iter().map(|c| c.len()).collect();
    let mut den = 0.0f64;
    let mut mass: Vec<Vec<f64>> = t.e1.iter().map(|e| vec![0.0; e.len()]).collect();
    product_enumerate(
        &sizes,
        |i, c| pair_w[i][c],
        |idx, w| {
            den += w;
            for v in 0..n {
                mass[v][pair_j1[v][idx[v]]] += w;
            }
        },
    );
    let mut num = vec![vec![0.0f64; n]; n]; // [v][u]
    for v in 0..n {
        for (j, &(m, _)) in t.e1[v].iter().enumerate() {
            let mut rest = m;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                num[v][u] += mass[v][j];
            }
        }
    }
    (den, num)
}

/// One order's denominator and numerators through the factored form: one
/// local sum per node (learner likelihood times prior-weighted donor
/// evidence), multiplied across nodes; numerators restrict the child's sum
/// to sets containing the candidate parent.
fn per_order_factored(t: &MtlTables, order: &Order, range: DonorRange) -> (f64, Vec<Vec<f64>>) {
    let n = order.n();
    let mut local = vec![0.0f64; n];
    let mut local_restricted = vec![vec![0.0f64; n]; n]; // [v][u]
    for i in 0..n {
        let pool = order.predecessors(i).mask();
        for &(m1, v1) in t.e1[i].iter().filter(|(m, _)| m & !pool == 0) {
            let w1 = (v1 - t.s1[i]).exp();
            let mut inner = 0.0f64;
            for &(m2, v2) in t.e2[i]
                .iter()
                .filter(|(m, _)| range == DonorRange::FullCappedUniverse || m & !pool == 0)
            {
                let delta = (m1 & !m2).count_ones() as usize;
                inner += (v2 - t.s2[i]).exp() * t.prior[delta];
            }
            local[i] += w1 * inner;
            let mut rest = m1;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                local_restricted[i][u] += w1 * inner;
            }
        }
    }
    // product of local sums excluding each node, via prefix/suffix
    let mut pre = vec![1.0f64; n + 1];
    let mut suf = vec![1.0f64; n + 1];
    for i in 0..n {
        pre[i + 1] = pre[i] * local[i];
        suf[n - 1 - i] = suf[n - i] * local[n - 1 - i];
    }
    let mut num = vec![vec![0.0f64; n]; n];
    for v in 0..n {
        let others = pre[v] * suf[v + 1];
        for u in 0..n {
            if u != v {
                num[v][u] = others * local_restricted[v][u];
            }
        }
    }
    (pre[n], num)
}

fn accumulate_over_orders(
    t: &MtlTables,
    n: usize,
    mut per_order: impl FnMut(&MtlTables, &Order) -> (f64, Vec<Vec<f64>>),
) -> EdgePosteriorMatrix {
    let mut den = 0.0f64;
    let mut num = vec![vec![0.0f64; n]; n];
    for perm in (0..n).permutations(n) {
        let order = Order::new(perm).unwrap();
        let (d, nm) = per_order(t, &order);
        den += d;
        for v in 0..n {
            for u in 0..n {
                num[v][u] += nm[v][u];
            }
        }
    }
    let mut out = EdgePosteriorMatrix::zeros(n);
    for v in 0..n {
        for u in 0..n {
            if u != v {
                out.set(u, v, num[v][u] / den);
            }
        }
    }
    out
}

/// Cross-task posterior for the first task by the literal pair-enumeration
/// double sum, over all orders.
pub fn mtl_unfactored_oracle(
    lik1: &[FamilyScoreTable],
    lik2: &[FamilyScoreTable],
    log_prior_by_delta: &[f64],
    range: DonorRange,
) -> EdgePosteriorMatrix {
    let t = MtlTables::new(lik1, lik2, log_prior_by_delta);
    accumulate_over_orders(&t, lik1.len(), |t, o| per_order_unfactored(t, o, range))
}

/// The same posterior through the factored per-order form.
pub fn mtl_factored_oracle(
    lik1: &[FamilyScoreTable],
    lik2: &[FamilyScoreTable],
    log_prior_by_delta: &[f64],
    range: DonorRange,
) -> EdgePosteriorMatrix {
    let t = MtlTables::new(lik1, lik2, log_prior_by_delta);
    accumulate_over_orders(&t, lik1.len(), |t, o| per_order_factored(t, o, range))
}

/// Largest relative gap between the two routes' per-order denominator and
/// numerators for a single fixed order. Used where the full-grid double sum
/// is too large to enumerate over every order.
pub fn per_order_route_gap(
    lik1: &[FamilyScoreTable],
    lik2: &[FamilyScoreTable],
    log_prior_by_delta: &[f64],
    order: &Order,
    range: DonorRange,
) -> f64 {
    let t = MtlTables::new(lik1, lik2, log_prior_by_delta);
    let (den_u, num_u) = per_order_unfactored(&t, order, range);
    let (den_f, num_f) = per_order_factored(&t, order, range);
    let mut gap = ((den_u - den_f) / den_f).abs();
    let n = order.n();
    for v in 0..n {
        for u in 0..n {
            if u != v && (num_u[v][u] != 0.0 || num_f[v][u] != 0.0) {
                gap = gap.max(((num_u[v][u] - num_f[v][u]) / den_f).abs());
            }
        }
    }
    gap
}

/// Composite-Simpson integral on [0, 1] with panel doubling until two
/// refinements agree to `rel_tol`; starts at 64 panels.
pub fn integrate_01(f: &dyn Fn(f64) -> f64, rel_tol: f64) -> f64 {
    let mut panels = 64usize;
    let mut prev = f64::NAN;
    loop {
        let h = 1.0 / panels as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..panels {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let est = s * h / 3.0;
        if !prev.is_nan() && ((est - prev) / est).abs() < rel_tol {
            return est;
        }
        prev = est;
        panels *= 2;
        assert!(panels <= 1 << 24, "quadrature failed to settle");
    }
}

/// Kahan-compensated sum for exhaustive normalization checks.
pub fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// First `m` rows of a task as a new task.
pub fn prefix_rows(data: &TaskData, vars: &VariableTable, m: usize, id: usize) -> TaskData {
    let rows: Vec<Vec<u8>> = data.rows().take(m).map(|r| r.to_vec()).collect();
    TaskData::new(id, vars, rows).unwrap()
}

/// Mean posterior over a set of ordered pairs.
pub fn mean_over(matrix: &EdgePosteriorMatrix, pairs: &[(usize, usize)]) -> f64 {
    let s: f64 = pairs.iter().map(|&(u, v)| matrix.get(u, v)).sum();
    s / pairs.len() as f64
}

/// All ordered pairs, split into (members, non-members) of an edge set.
pub fn split_pairs(
    n: usize,
    edges: &std::collections::BTreeSet<(usize, usize)>,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            if edges.contains(&(u, v)) {
                inside.push((u, v));
            } else {
                outside.push((u, v));
            }
        }
    }
    (inside, outside)
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Deterministic seed derivation for test protocols.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
