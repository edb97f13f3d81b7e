//! Benchmark networks and simulated task families.
//!
//! Networks live in a JSON document listing variables, edges, and one
//! conditional probability table per node (rows in mixed-radix parent
//! configuration order, lowest-indexed parent most significant). Related
//! tasks are derived from a source network by deleting each edge with some
//! probability and folding the deleted parent out of the child's table
//! against that parent's marginal. Raw continuous recordings enter through
//! sliding-window detrending and four-level quantile discretization.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dag, ModelError, ParentSet, TaskData, TaskSet, VariableTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown variable `{0}` referenced in network file")]
    UnknownVariable(String),
    #[error("node `{node}`: expected {expected} CPT rows, found {got}")]
    CptShape { node: String, expected: usize, got: usize },
    #[error("node `{node}`: CPT row {row} has {got} entries, arity is {arity}")]
    CptRowLen { node: String, row: usize, got: usize, arity: usize },
    #[error("node `{node}`: CPT row {row} sums to {sum}, must be 1")]
    CptRowSum { node: String, row: usize, sum: f64 },
    #[error("node `{node}`: CPT row {row} holds a negative probability")]
    NegativeProbability { node: String, row: usize },
    #[error("network has a directed cycle")]
    Cycle,
    #[error("missing CPT for node `{0}`")]
    MissingCpt(String),
    #[error("deletion probability {0} outside [0, 1]")]
    BadDeletionProbability(f64),
    #[error("window must be odd, at least 3, and no longer than the series (got {window} for {m} rows)")]
    BadWindow { window: usize, m: usize },
    #[error("column {0} is constant after detrending; cannot place quartile boundaries")]
    ConstantColumn(usize),
    #[error("input holds only whole numbers; it looks categorical -- load it as task data instead of discretizing")]
    LooksCategorical,
    #[error("empty series")]
    EmptySeries,
    #[error("task file `{path}`: {message}")]
    BadTaskFile { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// A discrete Bayesian network: shared variable table, DAG, and one CPT per
/// node with rows indexed by the mixed-radix parent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBayesNet {
    vars: VariableTable,
    dag: Dag,
    cpts: Vec<Vec<Vec<f64>>>,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl DiscreteBayesNet {
    pub fn new(vars: VariableTable, dag: Dag, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self, DataError> {
        let n = vars.n();
        if dag.n() != n || cpts.len() != n {
            return Err(DataError::CptShape {
                node: "<network>".into(),
                expected: n,
                got: cpts.len().min(dag.n()),
            });
        }
        if !dag.is_acyclic() {
            return Err(DataError::Cycle);
        }
        for node in 0..n {
            let expected: usize =
                dag.parents(node).iter().map(|p| vars.arity(p)).product();
            let rows = &cpts[node];
            if rows.len() != expected {
                return Err(DataError::CptShape {
                    node: vars.name(node).into(),
                    expected,
                    got: rows.len(),
                });
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != vars.arity(node) {
                    return Err(DataError::CptRowLen {
                        node: vars.name(node).into(),
                        row: r,
                        got: row.len(),
                        arity: vars.arity(node),
                    });
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(DataError::NegativeProbability {
                        node: vars.name(node).into(),
                        row: r,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(DataError::CptRowSum { node: vars.name(node).into(), row: r, sum });
                }
            }
        }
        Ok(Self { vars, dag, cpts })
    }

    pub fn vars(&self) -> &VariableTable {
        &self.vars
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, node: usize) -> &[Vec<f64>] {
        &self.cpts[node]
    }

    /// Row index into `node`'s CPT for the parent values in `assignment`.
    pub fn config_index(&self, node: usize, assignment: &[u8]) -> usize {
        let mut idx = 0usize;
        for p in self.dag.parents(node).iter() {
            idx = idx * self.vars.arity(p) + assignment[p] as usize;
        }
        idx
    }
}

#[derive(Serialize, Deserialize)]
struct VariableDecl {
    name: String,
    arity: usize,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    variables: Vec<VariableDecl>,
    edges: Vec<(String, String)>,
    cpts: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Parse and validate a network document; errors name the offending node
/// and row.
pub fn network_from_json(text: &str) -> Result<DiscreteBayesNet, DataError> {
    let file: NetworkFile = serde_json::from_str(text)?;
    let names: Vec<String> = file.variables.iter().map(|v| v.name.clone()).collect();
    let arities: Vec<usize> = file.variables.iter().map(|v| v.arity).collect();
    let vars = VariableTable::new(names, arities)?;
    let mut parents = vec![ParentSet::EMPTY; vars.n()];
    for (pname, cname) in &file.edges {
        let p = vars.index_of(pname).ok_or_else(|| DataError::UnknownVariable(pname.clone()))?;
        let c = vars.index_of(cname).ok_or_else(|| DataError::UnknownVariable(cname.clone()))?;
        parents[c] = parents[c].with(p);
    }
    let dag = Dag::new(parents)?;
    let mut cpts = Vec::with_capacity(vars.n());
    for node in 0..vars.n() {
        let rows = file
            .cpts
            .get(vars.name(node))
            .ok_or_else(|| DataError::MissingCpt(vars.name(node).into()))?;
        cpts.push(rows.clone());
    }
    for name in file.cpts.keys() {
        if vars.index_of(name).is_none() {
            return Err(DataError::UnknownVariable(name.clone()));
        }
    }
    DiscreteBayesNet::new(vars, dag, cpts)
}

pub fn network_to_json(net: &DiscreteBayesNet) -> String {
    let file = NetworkFile {
        variables: (0..net.vars.n())
            .map(|i| VariableDecl { name: net.vars.name(i).into(), arity: net.vars.arity(i) })
            .collect(),
        edges: net
            .dag
            .edges()
            .iter()
            .map(|&(u, v)| (net.vars.name(u).into(), net.vars.name(v).into()))
            .collect(),
        cpts: (0..net.vars.n())
            .map(|i| (net.vars.name(i).to_string(), net.cpts[i].clone()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("network file serializes")
}

pub fn load_network(path: impl AsRef<Path>) -> Result<DiscreteBayesNet, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    network_from_json(&text)
}

pub fn save_network(net: &DiscreteBayesNet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, network_to_json(net)).map_err(|e| io_err(path, e))
}

/// Deterministic seed derivation for sub-streams (per task, per repeat).
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_rows(net: &DiscreteBayesNet, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let order = net.dag.topological_order().expect("validated network is acyclic");
    let n = net.vars.n();
    let mut rows = Vec::with_capacity(m);
    let mut row = vec![0u8; n];
    for _ in 0..m {
        for &node in &order {
            let cfg = net.config_index(node, &row);
            row[node] = draw_categorical(&net.cpts[node][cfg], rng);
        }
        rows.push(row.clone());
    }
    rows
}

fn draw_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8;
        }
    }
    (probs.len() - 1) as u8
}

/// Ancestral sampling: each row draws every node from its CPT row given the
/// already-sampled parents. Reproducible from the seed.
pub fn forward_sample(net: &DiscreteBayesNet, m: usize, seed: u64) -> TaskData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample_rows(net, m, &mut rng);
    TaskData::new(0, &net.vars, rows).expect("sampled rows respect arities")
}

/// Per-node marginals by a forward pass that treats each node's parents as
/// independent (exact when they are; a close approximation otherwise).
pub fn propagated_marginals(net: &DiscreteBayesNet) -> Vec<Vec<f64>> {
    let order = net.dag.topological_order().expect("validated network is acyclic");
    let n = net.vars.n();
    let mut marg: Vec<Vec<f64>> = vec![Vec::new(); n];
    for &node in &order {
        let parents: Vec<usize> = net.dag.parents(node).iter().collect();
        let mut out = vec![0.0f64; net.vars.arity(node)];
        let rows = &net.cpts[node];
        for (cfg, row) in rows.iter().enumerate() {
            // decode the mixed-radix configuration and weigh it by the
            // product of parent marginals
            let mut weight = 1.0;
            let mut rest = cfg;
            for &p in parents.iter().rev() {
                let a = net.vars.arity(p);
                weight *= marg[p][rest % a];
                rest /= a;
            }
            for (s, &pr) in row.iter().enumerate() {
                out[s] += weight * pr;
            }
        }
        marg[node] = out;
    }
    marg
}

/// Edge-deletion protocol for deriving a related network.
#[derive(Debug, Clone)]
pub struct PerturbSpec {
    pub p_del: f64,
    pub seed: u64,
    /// Number of task families `make_task_families` generates.
    pub repeats: usize,
}

impl PerturbSpec {
    pub fn new(p_del: f64, seed: u64) -> Result<Self, DataError> {
        if !(0.0..=1.0).contains(&p_del) {
            return Err(DataError::BadDeletionProbability(p_del));
        }
        Ok(Self { p_del, seed, repeats: 1 })
    }

    pub fn with_repeats(mut self, repeats: usize) -> Self {
        self.repeats = repeats;
        self
    }
}

/// Deletes each edge independently with probability `p_del`; the child's CPT
/// is folded over each deleted parent using that parent's marginal in the
/// original network.
pub fn perturb_network(net: &DiscreteBayesNet, spec: &PerturbSpec) -> Result<DiscreteBayesNet, DataError> {
    if !(0.0..=1.0).contains(&spec.p_del) {
        return Err(DataError::BadDeletionProbability(spec.p_del));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = net.vars.n();
    let mut deleted: Vec<ParentSet> = vec![ParentSet::EMPTY; n];
    for (parent, child) in net.dag.edges() {
        if rng.random::<f64>() < spec.p_del {
            deleted[child] = deleted[child].with(parent);
        }
    }
    if deleted.iter().all(|d| d.is_empty()) {
        return Ok(net.clone());
    }
    let marg = propagated_marginals(net);
    let mut parents = Vec::with_capacity(n);
    let mut cpts = Vec::with_capacity(n);
    for node in 0..n {
        let kept = net.dag.parents(node).without_all(deleted[node]);
        parents.push(kept);
        if deleted[node].is_empty() {
            cpts.push(net.cpts[node].clone());
        } else {
            cpts.push(marginalize_cpt(net, node, kept, deleted[node], &marg));
        }
    }
    DiscreteBayesNet::new(net.vars.clone(), Dag::new(parents)?, cpts)
}

/// New CPT over the kept parents: for each kept configuration, mix the
/// original rows over all values of the deleted parents, weighted by the
/// product of their marginals.
fn marginalize_cpt(
    net: &DiscreteBayesNet,
    node: usize,
    kept: ParentSet,
    deleted: ParentSet,
    marg: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let vars = net.vars();
    let kept_idx: Vec<usize> = kept.iter().collect();
    let del_idx: Vec<usize> = deleted.iter().collect();
    let kept_configs: usize = kept_idx.iter().map(|&p| vars.arity(p)).product();
    let del_configs: usize = del_idx.iter().map(|&p| vars.arity(p)).product();
    let arity = vars.arity(node);
    let mut assignment = vec![0u8; vars.n()];
    let mut out = Vec::with_capacity(kept_configs);
    for kc in 0..kept_configs {
        decode_config(kc, &kept_idx, vars, &mut assignment);
        let mut row = vec![0.0f64; arity];
        for dc in 0..del_configs {
            decode_config(dc, &del_idx, vars, &mut assignment);
            let weight: f64 =
                del_idx.iter().map(|&p| marg[p][assignment[p] as usize]).product();
            let src = &net.cpts[node][net.config_index(node, &assignment)];
            for (s, &pr) in src.iter().enumerate() {
                row[s] += weight * pr;
            }
        }
        out.push(row);
    }
    out
}

fn decode_config(mut cfg: usize, idx: &[usize], vars: &VariableTable, assignment: &mut [u8]) {
    for &p in idx.iter().rev() {
        let a = vars.arity(p);
        assignment[p] = (cfg % a) as u8;
        cfg /= a;
    }
}

/// One family: K independently perturbed copies of the source network, each
/// forward-sampled `m` rows, plus the true DAGs for evaluation.
pub fn make_task_family(
    net: &DiscreteBayesNet,
    spec: &PerturbSpec,
    k: usize,
    m: usize,
) -> Result<(TaskSet, Vec<Dag>), DataError> {
    let mut tasks = Vec::with_capacity(k);
    let mut truths = Vec::with_capacity(k);
    for task in 0..k {
        let task_spec = PerturbSpec {
            p_del: spec.p_del,
            seed: mix_seed(spec.seed, 2 * task as u64),
            repeats: 1,
        };
        let perturbed = perturb_network(net, &task_spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 2 * task as u64 + 1));
        let rows = sample_rows(&perturbed, m, &mut rng);
        tasks.push(TaskData::new(task, &net.vars, rows)?);
        truths.push(perturbed.dag().clone());
    }
    Ok((TaskSet::new(net.vars.clone(), tasks)?, truths))
}

/// `spec.repeats` independent families, each from its own derived seed.
pub fn make_task_families(
    net: &DiscreteBayesNet,
    spec: &PerturbSpec,
    k: usize,
    m: usize,
) -> Result<Vec<(TaskSet, Vec<Dag>)>, DataError> {
    (0..spec.repeats)
        .map(|rep| {
            let rep_spec = PerturbSpec {
                p_del: spec.p_del,
                seed: mix_seed(spec.seed, 0x5eed_0000 + rep as u64),
                repeats: 1,
            };
            make_task_family(net, &rep_spec, k, m)
        })
        .collect()
}

/// Sliding-window detrend followed by four-level quantile discretization.
///
/// Each value loses the mean of a centered window (truncated at the series
/// boundaries); each column is then cut at its own quartiles into levels
/// 0..3. All output arities are 4.
pub fn detrend_discretize(series: &[Vec<f64>], window: usize) -> Result<TaskData, DataError> {
    let m = series.len();
    if m == 0 || series[0].is_empty() {
        return Err(DataError::EmptySeries);
    }
    let n = series[0].len();
    if series.iter().any(|r| r.len() != n) {
        return Err(DataError::EmptySeries);
    }
    if window < 3 || window.is_multiple_of(2) || window > m {
        return Err(DataError::BadWindow { window, m });
    }
    if series.iter().flatten().all(|v| v.fract() == 0.0) {
        return Err(DataError::LooksCategorical);
    }
    let half = window / 2;
    let mut levels = vec![vec![0u8; n]; m];
    for col in 0..n {
        let raw: Vec<f64> = series.iter().map(|r| r[col]).collect();
        let detrended: Vec<f64> = (0..m)
            .map(|t| {
                let lo = t.saturating_sub(half);
                let hi = (t + half).min(m - 1);
                let mean: f64 = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
                raw[t] - mean
            })
            .collect();
        let mut sorted = detrended.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[m - 1] {
            return Err(DataError::ConstantColumn(col));
        }
        let bounds = [sorted[m / 4], sorted[m / 2], sorted[3 * m / 4]];
        for (t, &v) in detrended.iter().enumerate() {
            levels[t][col] = bounds.iter().filter(|&&b| v >= b).count() as u8;
        }
    }
    let vars = VariableTable::uniform(n, 4)?;
    Ok(TaskData::new(0, &vars, levels)?)
}

/// Task files: a header of `name:arity` cells, then one comma-separated row
/// of category indices per sample.
pub fn task_data_to_csv(vars: &VariableTable, data: &TaskData) -> String {
    let mut s = String::new();
    let header: Vec<String> =
        (0..vars.n()).map(|i| format!("{}:{}", vars.name(i), vars.arity(i))).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in data.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn task_data_from_csv(text: &str, id: usize) -> Result<(VariableTable, TaskData), DataError> {
    let bad = |message: String| DataError::BadTaskFile { path: "<string>".into(), message };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
    let mut names = Vec::new();
    let mut arities = Vec::new();
    for cell in header.split(',') {
        let (name, arity) = cell
            .rsplit_once(':')
            .ok_or_else(|| bad(format!("header cell `{cell}` is not name:arity")))?;
        names.push(name.trim().to_string());
        arities.push(
            arity
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("bad arity in header cell `{cell}`")))?,
        );
    }
    let vars = VariableTable::new(names, arities)?;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row: Vec<u8> = line
            .split(',')
            .map(|c| c.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("bad value on data row {lineno}")))?;
        rows.push(row);
    }
    let data = TaskData::new(id, &vars, rows)?;
    Ok((vars, data))
}

pub fn save_task_data(
    vars: &VariableTable,
    data: &TaskData,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, task_data_to_csv(vars, data)).map_err(|e| io_err(path, e))
}

pub fn load_task_data(path: impl AsRef<Path>, id: usize) -> Result<(VariableTable, TaskData), DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    task_data_from_csv(&text, id).map_err(|e| match e {
        DataError::BadTaskFile { message, .. } => {
            DataError::BadTaskFile { path: path.display().to_string(), message }
        }
        other => other,
    })
}

#[derive(Serialize, Deserialize)]
struct DagFile {
    variables: Vec<String>,
    edges: Vec<(String, String)>,
}

/// True-structure files for evaluation: variables plus directed edges.
pub fn save_dag(vars: &VariableTable, dag: &Dag, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = DagFile {
        variables: vars.names().to_vec(),
        edges: dag
            .edges()
            .iter()
            .map(|&(u, v)| (vars.name(u).into(), vars.name(v).into()))
            .collect(),
    };
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("dag file serializes"))
        .map_err(|e| io_err(path, e))
}

pub fn load_dag(path: impl AsRef<Path>) -> Result<(Vec<String>, Dag), DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: DagFile = serde_json::from_str(&text)?;
    let index: std::collections::HashMap<&str, usize> =
        file.variables.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut parents = vec![ParentSet::EMPTY; file.variables.len()];
    for (pname, cname) in &file.edges {
        let p = *index.get(pname.as_str()).ok_or_else(|| DataError::UnknownVariable(pname.clone()))?;
        let c = *index.get(cname.as_str()).ok_or_else(|| DataError::UnknownVariable(cname.clone()))?;
        parents[c] = parents[c].with(p);
    }
    Ok((file.variables, Dag::new(parents)?))
}
