//! Core domain types shared by every engine: variables, parent sets, DAGs,
//! node orders, features, task data, and the edge-posterior matrix.

use thiserror::Error;

/// Hard width limit for parent-set bitmasks.
///
/// Every variable index must fit in a `u64` mask, so networks are capped at
/// 64 variables across the library.
pub const MAX_VARS: usize = 64;

/// Largest category count a column may declare (cells are stored as `u8`).
pub const MAX_ARITY: usize = 256;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variable count {0} outside supported range 1..={MAX_VARS}")]
    BadVariableCount(usize),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable `{name}` has arity {arity}; need 2..={MAX_ARITY}")]
    BadArity { name: String, arity: usize },
    #[error("order is not a permutation of 0..{0}")]
    BadPermutation(usize),
    #[error("node {node} lists itself as a parent")]
    SelfParent { node: usize },
    #[error("parent set references variable {index} but the network has {n} variables")]
    ParentOutOfRange { index: usize, n: usize },
    #[error("task {task}: row {row}, column {col} holds {value} but the column arity is {arity}")]
    CellOutOfRange { task: usize, row: usize, col: usize, value: usize, arity: usize },
    #[error("task {task} has no rows")]
    EmptyTask { task: usize },
    #[error("task {task} has {got} columns, expected {expected}")]
    ColumnMismatch { task: usize, got: usize, expected: usize },
    #[error("task set must contain at least one task")]
    EmptyTaskSet,
    #[error("feature endpoints must differ (got {0} -> {0})")]
    SelfEdge(usize),
}

/// Shared variable table: names and category counts, one per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableTable {
    names: Vec<String>,
    arities: Vec<usize>,
}

impl VariableTable {
    pub fn new(names: Vec<String>, arities: Vec<usize>) -> Result<Self, ModelError> {
        let n = names.len();
        if n == 0 || n > MAX_VARS || arities.len() != n {
            return Err(ModelError::BadVariableCount(n.max(arities.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        for (name, &a) in names.iter().zip(&arities) {
            if !(2..=MAX_ARITY).contains(&a) {
                return Err(ModelError::BadArity { name: name.clone(), arity: a });
            }
        }
        Ok(Self { names, arities })
    }

    /// `n` columns named `x0..x{n-1}`, all with the same arity.
    pub fn uniform(n: usize, arity: usize) -> Result<Self, ModelError> {
        let names = (0..n).map(|i| format!("x{i}")).collect();
        Self::new(names, vec![arity; n])
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn arity(&self, i: usize) -> usize {
        self.arities[i]
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|x| x == name)
    }
}

/// A set of candidate parents encoded as a bitmask over variable indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ParentSet(u64);

impl ParentSet {
    pub const EMPTY: ParentSet = ParentSet(0);

    pub fn from_mask(mask: u64) -> Self {
        ParentSet(mask)
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut m = 0u64;
        for &i in indices {
            debug_assert!(i < MAX_VARS);
            m |= 1 << i;
        }
        ParentSet(m)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        ParentSet(self.0 | 1 << i)
    }

    pub fn without(self, i: usize) -> Self {
        ParentSet(self.0 & !(1 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: ParentSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members of `self` not in `other`.
    pub fn without_all(self, other: ParentSet) -> ParentSet {
        ParentSet(self.0 & !other.0)
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }
}

/// Number of parents present in `pk` but absent from `pj`.
///
/// One-directional by construction: only additions in `pk` count, so
/// `edit_delta(a, b) + edit_delta(b, a)` is the symmetric-difference size.
pub fn edit_delta(pk: ParentSet, pj: ParentSet) -> usize {
    (pk.mask() & !pj.mask()).count_ones() as usize
}

/// Every subset of `universe` with at most `cap` members, ascending mask order.
pub fn capped_subsets(universe: ParentSet, cap: usize) -> Vec<ParentSet> {
    let bits: Vec<usize> = universe.iter().collect();
    let mut out = Vec::new();
    let mut stack: Vec<(usize, u64, usize)> = vec![(0, 0, 0)]; // (next bit idx, mask, size)
    while let Some((idx, mask, size)) = stack.pop() {
        if idx == bits.len() {
            out.push(ParentSet::from_mask(mask));
            continue;
        }
        // exclude-then-include; order fixed by the final sort anyway
        stack.push((idx + 1, mask, size));
        if size < cap {
            stack.push((idx + 1, mask | 1 << bits[idx], size + 1));
        }
    }
    out.sort_unstable();
    out
}

/// Directed graph stored as one parent set per node. May hold cycles;
/// acyclicity is checked, not assumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<ParentSet>,
}

impl Dag {
    pub fn new(parents: Vec<ParentSet>) -> Result<Self, ModelError> {
        let n = parents.len();
        if n == 0 || n > MAX_VARS {
            return Err(ModelError::BadVariableCount(n));
        }
        for (i, p) in parents.iter().enumerate() {
            if p.contains(i) {
                return Err(ModelError::SelfParent { node: i });
            }
            if let Some(j) = p.iter().find(|&j| j >= n) {
                return Err(ModelError::ParentOutOfRange { index: j, n });
            }
        }
        Ok(Self { parents })
    }

    pub fn empty(n: usize) -> Result<Self, ModelError> {
        Self::new(vec![ParentSet::EMPTY; n])
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> ParentSet {
        self.parents[node]
    }

    pub fn parent_sets(&self) -> &[ParentSet] {
        &self.parents
    }

    /// Directed edges `(parent, child)` ordered by child, then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (child, p) in self.parents.iter().enumerate() {
            for parent in p.iter() {
                out.push((parent, child));
            }
        }
        out.sort_unstable_by_key(|&(u, v)| (v, u));
        out
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(|p| p.len()).sum()
    }

    /// Kahn's algorithm; `None` when the graph has a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n();
        let mut indegree: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (child, p) in self.parents.iter().enumerate() {
            for parent in p.iter() {
                children[parent].push(child);
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// True iff every parent of every node precedes it in `order`.
    pub fn consistent_with_order(&self, order: &Order) -> bool {
        self.parents.iter().enumerate().all(|(child, p)| {
            p.iter().all(|parent| order.position(parent) < order.position(child))
        })
    }
}

/// True iff `g` admits a topological order.
pub fn topological_check(g: &Dag) -> bool {
    g.is_acyclic()
}

/// A node order: `perm[pos]` is the variable at position `pos`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    perm: Vec<usize>,
    pos: Vec<usize>,
}

impl Order {
    pub fn new(perm: Vec<usize>) -> Result<Self, ModelError> {
        let n = perm.len();
        let mut pos = vec![usize::MAX; n];
        for (p, &v) in perm.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return Err(ModelError::BadPermutation(n));
            }
            pos[v] = p;
        }
        if n == 0 || n > MAX_VARS {
            return Err(ModelError::BadVariableCount(n));
        }
        Ok(Self { perm, pos })
    }

    pub fn identity(n: usize) -> Self {
        Self::new((0..n).collect()).expect("identity permutation is valid")
    }

    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self::new(perm).expect("shuffled identity stays a permutation")
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn var_at(&self, pos: usize) -> usize {
        self.perm[pos]
    }

    pub fn position(&self, var: usize) -> usize {
        self.pos[var]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Variables preceding `var`: its candidate parents under this order.
    pub fn predecessors(&self, var: usize) -> ParentSet {
        let mut m = 0u64;
        for &v in &self.perm[..self.pos[var]] {
            m |= 1 << v;
        }
        ParentSet::from_mask(m)
    }

    pub fn swap_positions(&mut self, a: usize, b: usize) {
        self.perm.swap(a, b);
        self.pos[self.perm[a]] = a;
        self.pos[self.perm[b]] = b;
    }
}

/// A structural feature: the directed edge `parent -> child`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Feature {
    pub parent: usize,
    pub child: usize,
}

impl Feature {
    pub fn edge(parent: usize, child: usize) -> Result<Self, ModelError> {
        if parent == child {
            return Err(ModelError::SelfEdge(parent));
        }
        Ok(Self { parent, child })
    }

    /// Indicator on a parent set: 1 iff the edge's parent is present.
    pub fn holds_in(&self, parents: ParentSet) -> bool {
        parents.contains(self.parent)
    }
}

/// One task's categorical data: `m` rows over `n` columns, values stored
/// row-major as `u8` category indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskData {
    id: usize,
    n: usize,
    m: usize,
    values: Vec<u8>,
}

impl TaskData {
    pub fn new(id: usize, vars: &VariableTable, rows: Vec<Vec<u8>>) -> Result<Self, ModelError> {
        let n = vars.n();
        let m = rows.len();
        if m == 0 {
            return Err(ModelError::EmptyTask { task: id });
        }
        let mut values = Vec::with_capacity(m * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::ColumnMismatch { task: id, got: row.len(), expected: n });
            }
            for (c, &v) in row.iter().enumerate() {
                if v as usize >= vars.arity(c) {
                    return Err(ModelError::CellOutOfRange {
                        task: id,
                        row: r,
                        col: c,
                        value: v as usize,
                        arity: vars.arity(c),
                    });
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self { id, n, m, values })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn value(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.values[row * self.n..(row + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.values.chunks_exact(self.n)
    }

    /// Row-concatenation of several tasks into a single task.
    pub fn pooled(vars: &VariableTable, tasks: &[TaskData]) -> Result<Self, ModelError> {
        if tasks.is_empty() {
            return Err(ModelError::EmptyTaskSet);
        }
        let rows = tasks.iter().flat_map(|t| t.rows().map(|r| r.to_vec())).collect();
        Self::new(0, vars, rows)
    }
}

/// A family of related tasks sharing one variable table.
#[derive(Debug, Clone)]
pub struct TaskSet {
    vars: VariableTable,
    tasks: Vec<TaskData>,
}

impl TaskSet {
    pub fn new(vars: VariableTable, tasks: Vec<TaskData>) -> Result<Self, ModelError> {
        if tasks.is_empty() {
            return Err(ModelError::EmptyTaskSet);
        }
        for t in &tasks {
            if t.n() != vars.n() {
                return Err(ModelError::ColumnMismatch {
                    task: t.id(),
                    got: t.n(),
                    expected: vars.n(),
                });
            }
        }
        Ok(Self { vars, tasks })
    }

    pub fn vars(&self) -> &VariableTable {
        &self.vars
    }

    pub fn k(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, k: usize) -> &TaskData {
        &self.tasks[k]
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }
}

/// Posterior probability of each directed edge; the diagonal is unused and
/// pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePosteriorMatrix {
    n: usize,
    values: Vec<f64>,
}

impl EdgePosteriorMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, parent: usize, child: usize) -> f64 {
        self.values[parent * self.n + child]
    }

    pub fn set(&mut self, parent: usize, child: usize, p: f64) {
        debug_assert!(parent != child, "diagonal entries stay zero");
        self.values[parent * self.n + child] = p;
    }

    /// Off-diagonal entries as `(parent, child, probability)`.
    pub fn iter_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            (0..self.n)
                .filter(move |&v| v != u)
                .map(move |v| (u, v, self.get(u, v)))
        })
    }

    pub fn max_abs_diff(&self, other: &EdgePosteriorMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Plain-text form: `n` lines of `n` decimal values.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for u in 0..self.n {
            let row: Vec<String> =
                (0..self.n).map(|v| format!("{}", self.get_raw(u, v))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(|t| t.parse::<f64>()).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()
            .map_err(|_| ModelError::BadVariableCount(0))?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::BadVariableCount(n));
        }
        let mut m = Self::zeros(n);
        for (u, row) in rows.iter().enumerate() {
            for (v, &p) in row.iter().enumerate() {
                if u != v {
                    m.set(u, v, p);
                }
            }
        }
        Ok(m)
    }

    fn get_raw(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }
}
