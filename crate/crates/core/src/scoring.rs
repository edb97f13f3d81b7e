//! BDeu family scores: log marginal likelihood of one node's column given a
//! capped parent set, plus the uniform structure prior over capped sets.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::{capped_subsets, ParentSet, TaskData, VariableTable};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("parent configuration count {q} for node {node} exceeds the limit {limit}")]
    ArityOverflow { node: usize, q: u128, limit: u64 },
    #[error("no data rows")]
    EmptyData,
    #[error("parent set of node {node} has {got} members, cap is {cap}")]
    CapExceeded { node: usize, got: usize, cap: usize },
    #[error("node {node} cannot be its own parent")]
    SelfParent { node: usize },
    #[error("in-degree cap {r} invalid for {n} variables (need 1..={max})", max = .n - 1)]
    BadCap { r: usize, n: usize },
}

/// Scoring knobs: in-degree cap `r`, equivalent sample size, and a guard on
/// the number of parent configurations a single family may expand to.
#[derive(Debug, Clone)]
pub struct ScoreConfig {
    pub max_parents: usize,
    pub ess: f64,
    pub max_parent_configs: u64,
}

impl ScoreConfig {
    pub fn new(max_parents: usize) -> Self {
        Self { max_parents, ess: 1.0, max_parent_configs: 1 << 20 }
    }

    pub fn with_ess(mut self, ess: f64) -> Self {
        self.ess = ess;
        self
    }

    pub fn validate_for(&self, n: usize) -> Result<(), ScoreError> {
        if self.max_parents == 0 || self.max_parents > n.saturating_sub(1) {
            return Err(ScoreError::BadCap { r: self.max_parents, n });
        }
        Ok(())
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::new(3)
    }
}

/// Per-node table of log values over every parent set within the cap,
/// entries sorted by ascending mask. Reused both for raw likelihoods and for
/// prior- or transfer-adjusted scores fed to the engines.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScoreTable {
    node: usize,
    cap: usize,
    ess: f64,
    entries: Vec<(u64, f64)>,
}

impl FamilyScoreTable {
    pub fn from_entries(node: usize, cap: usize, ess: f64, entries: Vec<(u64, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { node, cap, ess, entries }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, parents: ParentSet) -> Option<f64> {
        self.entries
            .binary_search_by_key(&parents.mask(), |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Entries in ascending mask order.
    pub fn iter(&self) -> impl Iterator<Item = (ParentSet, f64)> + '_ {
        self.entries.iter().map(|&(m, v)| (ParentSet::from_mask(m), v))
    }

    /// Same table with every value shifted or transformed.
    pub fn map_values(&self, mut f: impl FnMut(ParentSet, f64) -> f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(m, v)| (m, f(ParentSet::from_mask(m), v)))
            .collect();
        Self { node: self.node, cap: self.cap, ess: self.ess, entries }
    }
}

/// Log BDeu marginal likelihood of `child`'s column given `parents`.
///
/// With q parent configurations and child arity r_i, the Dirichlet
/// hyperparameters are alpha_j = ess/q per configuration and
/// alpha_jc = ess/(q*r_i) per cell.
pub fn family_log_marginal(
    data: &TaskData,
    vars: &VariableTable,
    child: usize,
    parents: ParentSet,
    cfg: &ScoreConfig,
) -> Result<f64, ScoreError> {
    if parents.contains(child) {
        return Err(ScoreError::SelfParent { node: child });
    }
    if parents.len() > cfg.max_parents {
        return Err(ScoreError::CapExceeded { node: child, got: parents.len(), cap: cfg.max_parents });
    }
    if data.m() == 0 {
        return Err(ScoreError::EmptyData);
    }
    let counts = count_family(data, vars, child, parents, cfg)?;
    Ok(bdeu_from_counts(&counts, cfg.ess))
}

/// Contingency counts for one family, keyed by the mixed-radix parent
/// configuration. Only observed configurations are materialized; absent ones
/// contribute nothing to the score.
struct FamilyCounts {
    q: u64,
    child_arity: usize,
    /// (config key, per-child-state counts), ascending key
    cells: Vec<(u64, Vec<u32>)>,
}

const DENSE_CONFIG_LIMIT: u64 = 4096;

fn count_family(
    data: &TaskData,
    vars: &VariableTable,
    child: usize,
    parents: ParentSet,
    cfg: &ScoreConfig,
) -> Result<FamilyCounts, ScoreError> {
    let parent_idx: Vec<usize> = parents.iter().collect();
    let mut q: u128 = 1;
    for &p in &parent_idx {
        q *= vars.arity(p) as u128;
    }
    if q > cfg.max_parent_configs as u128 {
        return Err(ScoreError::ArityOverflow { node: child, q, limit: cfg.max_parent_configs });
    }
    let q = q as u64;
    let ri = vars.arity(child);

    // Mixed-radix key with the lowest parent index most significant.
    let key_of = |row: &[u8]| -> u64 {
        let mut key = 0u64;
        for &p in &parent_idx {
            key = key * vars.arity(p) as u64 + row[p] as u64;
        }
        key
    };

    let cells = if q <= DENSE_CONFIG_LIMIT {
        let mut dense = vec![0u32; (q as usize) * ri];
        for row in data.rows() {
            dense[key_of(row) as usize * ri + row[child] as usize] += 1;
        }
        (0..q)
            .filter_map(|j| {
                let slice = &dense[j as usize * ri..(j as usize + 1) * ri];
                if slice.iter().all(|&c| c == 0) {
                    None
                } else {
                    Some((j, slice.to_vec()))
                }
            })
            .collect()
    } else {
        let mut sparse: std::collections::BTreeMap<u64, Vec<u32>> = std::collections::BTreeMap::new();
        for row in data.rows() {
            sparse.entry(key_of(row)).or_insert_with(|| vec![0u32; ri])[row[child] as usize] += 1;
        }
        sparse.into_iter().collect()
    };
    Ok(FamilyCounts { q, child_arity: ri, cells })
}

fn bdeu_from_counts(counts: &FamilyCounts, ess: f64) -> f64 {
    let alpha_j = ess / counts.q as f64;
    let alpha_jc = alpha_j / counts.child_arity as f64;
    let lg_alpha_j = ln_gamma(alpha_j);
    let lg_alpha_jc = ln_gamma(alpha_jc);
    let mut score = 0.0;
    for (_, cell) in &counts.cells {
        let mj: u32 = cell.iter().sum();
        score += lg_alpha_j - ln_gamma(alpha_j + mj as f64);
        for &c in cell {
            if c > 0 {
                score += ln_gamma(alpha_jc + c as f64) - lg_alpha_jc;
            }
        }
    }
    score
}

/// Scores every parent set of `child` within the cap.
pub fn build_score_table(
    data: &TaskData,
    vars: &VariableTable,
    child: usize,
    cfg: &ScoreConfig,
) -> Result<FamilyScoreTable, ScoreError> {
    cfg.validate_for(vars.n())?;
    let universe = full_universe(vars.n()).without(child);
    let mut entries = Vec::new();
    for parents in capped_subsets(universe, cfg.max_parents) {
        let v = family_log_marginal(data, vars, child, parents, cfg)?;
        debug_assert!(v.is_finite());
        entries.push((parents.mask(), v));
    }
    Ok(FamilyScoreTable::from_entries(child, cfg.max_parents, cfg.ess, entries))
}

/// One table per node; independent families score in parallel.
pub fn build_all_score_tables(
    data: &TaskData,
    vars: &VariableTable,
    cfg: &ScoreConfig,
) -> Result<Vec<FamilyScoreTable>, ScoreError> {
    (0..vars.n())
        .into_par_iter()
        .map(|child| build_score_table(data, vars, child, cfg))
        .collect()
}

/// Uniform prior over all parent sets within the cap:
/// -log sum_{s<=min(r,u)} C(u, s). Constant across sets of the same universe.
pub fn log_structure_prior(parents: ParentSet, universe_size: usize, cfg: &ScoreConfig) -> f64 {
    debug_assert!(parents.len() <= cfg.max_parents);
    let _ = parents;
    let r = cfg.max_parents.min(universe_size);
    let mut total: u128 = 0;
    for s in 0..=r {
        total += binom_u128(universe_size, s);
    }
    -(total as f64).ln()
}

/// Adds the uniform structure prior to a table of raw likelihoods, producing
/// the beta values the engines consume.
pub fn with_structure_prior(table: &FamilyScoreTable, universe_size: usize, cfg: &ScoreConfig) -> FamilyScoreTable {
    let prior = log_structure_prior(ParentSet::EMPTY, universe_size, cfg);
    table.map_values(|_, v| v + prior)
}

pub(crate) fn full_universe(n: usize) -> ParentSet {
    if n >= 64 {
        ParentSet::from_mask(u64::MAX)
    } else {
        ParentSet::from_mask((1u64 << n) - 1)
    }
}

pub(crate) fn binom_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut v: u128 = 1;
    for i in 0..k {
        v = v * (n - i) as u128 / (i + 1) as u128;
    }
    v
}
