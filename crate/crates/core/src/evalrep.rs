//! Evaluation: thresholded edge sets against a large-sample ground truth,
//! ROC curves and AUC, per-trial AUC comparisons, and paired-t verdicts.
//!
//! Two rate conventions are carried side by side. The replication
//! convention divides true positives by the predicted-edge count and false
//! positives by |E| - |E_hat|; the standard convention is the usual
//! TPR = |hit| / |E*| and FPR = |false alarm| / |E \ E*|. AUC defaults to
//! the standard convention, where the curve is well behaved.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{Dag, EdgePosteriorMatrix};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("paired test needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("matrix is {got}x{got} but the ground truth is {expected}x{expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Large-sample reference: the posterior matrix the truth was read from and
/// the edge set it induces at threshold 0.5.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pstar: EdgePosteriorMatrix,
    edges: EdgeSet,
}

impl GroundTruth {
    /// True edges are exactly the entries with posterior above 0.5.
    pub fn from_matrix(pstar: EdgePosteriorMatrix) -> Self {
        let edges = threshold_edges(&pstar, 0.5).expect("0.5 is a valid threshold");
        Self { pstar, edges }
    }

    /// Truth from a known structure: the indicator matrix of its edges.
    pub fn from_dag(dag: &Dag) -> Self {
        let mut m = EdgePosteriorMatrix::zeros(dag.n());
        for (u, v) in dag.edges() {
            m.set(u, v, 1.0);
        }
        Self::from_matrix(m)
    }

    pub fn n(&self) -> usize {
        self.pstar.n()
    }

    pub fn pstar(&self) -> &EdgePosteriorMatrix {
        &self.pstar
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }
}

/// Edges whose posterior strictly exceeds `tau`; the diagonal never
/// qualifies.
pub fn threshold_edges(matrix: &EdgePosteriorMatrix, tau: f64) -> Result<EdgeSet, EvalError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(EvalError::BadThreshold(tau));
    }
    Ok(matrix.iter_edges().filter(|&(_, _, p)| p > tau).map(|(u, v, _)| (u, v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Convention {
    Standard,
    Paper,
}

/// TP and FP rates in one convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tp_rate: f64,
    pub fp_rate: f64,
}

/// Both conventions for one estimated edge set; the caller picks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub standard: Rates,
    pub paper: Rates,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        // 0/0 reads as "no rate"; a positive count over an empty
        // denominator saturates instead of blowing up
        if num == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Rates of an estimated edge set against the truth over the n(n-1) ordered
/// pairs.
pub fn rates(est: &EdgeSet, truth: &GroundTruth, n: usize) -> RatePair {
    let all_pairs = n * (n - 1);
    let hits = est.intersection(truth.edges()).count();
    let false_alarms = est.len() - hits;
    let true_edges = truth.edges().len();
    RatePair {
        standard: Rates {
            tp_rate: ratio(hits, true_edges),
            fp_rate: ratio(false_alarms, all_pairs - true_edges),
        },
        paper: Rates {
            tp_rate: ratio(hits, est.len()),
            fp_rate: ratio(false_alarms, all_pairs - est.len()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tau: f64,
    pub fp_rate: f64,
    pub tp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub convention: Convention,
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

const TAU_STEPS: usize = 100;

/// Sweep tau over {0, 0.01, ..., 1} and integrate the resulting curve by
/// trapezoid over points sorted by FP rate. The standard convention pads the
/// endpoints (0,0) and (1,1); the replication convention is integrated as
/// printed, without padding.
pub fn roc_auc(
    matrix: &EdgePosteriorMatrix,
    truth: &GroundTruth,
    convention: Convention,
) -> Result<RocCurve, EvalError> {
    if matrix.n() != truth.n() {
        return Err(EvalError::ShapeMismatch { got: matrix.n(), expected: truth.n() });
    }
    let n = matrix.n();
    let mut points = Vec::with_capacity(TAU_STEPS + 1);
    for step in 0..=TAU_STEPS {
        let tau = step as f64 / TAU_STEPS as f64;
        let est = threshold_edges(matrix, tau)?;
        let pair = rates(&est, truth, n);
        let r = match convention {
            Convention::Standard => pair.standard,
            Convention::Paper => pair.paper,
        };
        points.push(RocPoint { tau, fp_rate: r.fp_rate, tp_rate: r.tp_rate });
    }
    let mut curve: Vec<(f64, f64)> = points.iter().map(|p| (p.fp_rate, p.tp_rate)).collect();
    if convention == Convention::Standard {
        curve.push((0.0, 0.0));
        curve.push((1.0, 1.0));
    }
    curve.sort_by(|a, b| a.partial_cmp(b).expect("rates are never NaN"));
    let mut auc = 0.0;
    for w in curve.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
    }
    Ok(RocCurve { convention, points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    FirstWins,
    SecondWins,
    NoDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub verdict: Verdict,
    pub t: f64,
    pub p: f64,
    pub mean_delta: f64,
}

/// Two-sided paired Student t on per-trial differences (first minus second).
pub fn paired_t(deltas: &[f64], alpha: f64) -> Result<TTestResult, EvalError> {
    let n = deltas.len();
    if n < 2 {
        return Err(EvalError::TooFewTrials(n));
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        // degenerate: identical deltas every trial
        return Ok(if mean == 0.0 {
            TTestResult { verdict: Verdict::NoDifference, t: 0.0, p: 1.0, mean_delta: 0.0 }
        } else {
            TTestResult {
                verdict: if mean > 0.0 { Verdict::FirstWins } else { Verdict::SecondWins },
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                mean_delta: mean,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    let verdict = if p < alpha {
        if mean > 0.0 {
            Verdict::FirstWins
        } else {
            Verdict::SecondWins
        }
    } else {
        Verdict::NoDifference
    };
    Ok(TTestResult { verdict, t, p, mean_delta: mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Stl,
    Mtl,
    Pool,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Stl => write!(f, "STL"),
            Mode::Mtl => write!(f, "MTL"),
            Mode::Pool => write!(f, "POOL"),
        }
    }
}

/// AUC results laid out as (mode, sample size, trial) -> value. Cells may be
/// missing; reports mark the gaps instead of imputing.
#[derive(Debug, Clone, Default)]
pub struct ResultGrid {
    cells: std::collections::BTreeMap<(Mode, usize, usize), f64>,
}

impl ResultGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mode: Mode, samples: usize, trial: usize, auc: f64) {
        self.cells.insert((mode, samples, trial), auc);
    }

    pub fn get(&self, mode: Mode, samples: usize, trial: usize) -> Option<f64> {
        self.cells.get(&(mode, samples, trial)).copied()
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.keys().map(|&(_, m, _)| m).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn trials(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.keys().map(|&(_, _, t)| t).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// One pairwise comparison aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Mean over trials of the per-trial percent AUC increase.
    pub pct_incr: f64,
    pub test: TTestResult,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub samples: usize,
    /// `None` marks a gap (some trial missing a cell); nothing is imputed.
    pub mtl_vs_stl: Option<Comparison>,
    pub mtl_vs_pool: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
}

fn compare(grid: &ResultGrid, samples: usize, against: Mode, alpha: f64) -> Option<Comparison> {
    let trials = grid.trials();
    let mut deltas = Vec::with_capacity(trials.len());
    let mut pct = Vec::with_capacity(trials.len());
    for &t in &trials {
        let mtl = grid.get(Mode::Mtl, samples, t)?;
        let other = grid.get(against, samples, t)?;
        deltas.push(mtl - other);
        pct.push(if other == 0.0 { 0.0 } else { 100.0 * (mtl - other) / other });
    }
    let test = paired_t(&deltas, alpha).ok()?;
    Some(Comparison {
        pct_incr: pct.iter().sum::<f64>() / pct.len() as f64,
        test,
        trials: trials.len(),
    })
}

/// Per-sample-size mean percent AUC increase of the multitask mode over each
/// baseline, with paired-t verdicts.
pub fn experiment_report(grid: &ResultGrid, alpha: f64) -> ExperimentReport {
    let rows = grid
        .sample_sizes()
        .into_iter()
        .map(|samples| ReportRow {
            samples,
            mtl_vs_stl: compare(grid, samples, Mode::Stl, alpha),
            mtl_vs_pool: compare(grid, samples, Mode::Pool, alpha),
        })
        .collect();
    ExperimentReport { alpha, rows }
}

impl ExperimentReport {
    fn cell(c: &Option<Comparison>) -> (String, String) {
        match c {
            Some(c) => {
                let verdict = match c.test.verdict {
                    Verdict::FirstWins => "MTL",
                    Verdict::SecondWins => "other",
                    Verdict::NoDifference => "-",
                };
                (format!("{:+.2}", c.pct_incr), verdict.to_string())
            }
            None => ("missing".into(), "missing".into()),
        }
    }

    /// Comma-separated table, one row per sample size.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "samples,mtl_vs_stl_pct_incr,mtl_vs_stl_verdict,mtl_vs_pool_pct_incr,mtl_vs_pool_verdict\n",
        );
        for row in &self.rows {
            let (a, av) = Self::cell(&row.mtl_vs_stl);
            let (b, bv) = Self::cell(&row.mtl_vs_pool);
            s.push_str(&format!("{},{},{},{},{}\n", row.samples, a, av, b, bv));
        }
        s
    }

    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:>8} | {:>12} {:>8} | {:>12} {:>8}\n",
            "samples", "MTLvsSTL %", "pair-t", "MTLvsPOOL %", "pair-t"
        ));
        for row in &self.rows {
            let (a, av) = Self::cell(&row.mtl_vs_stl);
            let (b, bv) = Self::cell(&row.mtl_vs_pool);
            s.push_str(&format!("{:>8} | {:>12} {:>8} | {:>12} {:>8}\n", row.samples, a, av, b, bv));
        }
        s
    }
}
