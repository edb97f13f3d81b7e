//! Joint prior over parent-set pairs across two tasks.
//!
//! The prior penalizes every parent present in one task's set but absent
//! from the other's, geometrically in (1 - lambda):
//!
//! ```text
//! P(pk, pj | U, lambda) = (1 - lambda)^delta / (4 - lambda)^|U|
//! ```
//!
//! where `delta = |pk \ pj|`. The denominator is the exact normalizer over
//! all pairs of subsets of U: each element of U independently lands in
//! neither set, the second only, both, or the first only, contributing
//! 3 + (1 - lambda) per element. Averaging the prior over lambda uniform on
//! [0, 1] has the closed form
//!
//! ```text
//! P(pk, pj | U) = 2F1(|U|, 1; delta + 2; 1/4) / (4^|U| (delta + 1))
//! ```
//!
//! with the Gauss hypergeometric series evaluated directly at z = 1/4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("delta {delta} exceeds universe size {u_size}")]
    DeltaOutOfRange { delta: usize, u_size: usize },
    #[error("hypergeometric series failed to converge after {0} terms")]
    SeriesDiverged(usize),
}

/// How strongly (and whether) the cross-task penalty is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMode {
    /// Geometric penalty at a fixed transfer strength in [0, 1].
    FixedLambda(f64),
    /// Average the fixed-strength prior over lambda uniform on [0, 1].
    Bma,
}

/// Which normalizer divides the penalty.
///
/// `ClosedForm` uses (4 - lambda)^|U|, which is exact only when parent sets
/// are not capped; it is the default. `Truncated` sums the penalty over
/// exactly the pairs of capped sets, which is slower to build but exact
/// under an in-degree cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    ClosedForm,
    Truncated,
}

/// log (4 - lambda)^|U|, the pair-enumeration normalizer in closed form.
pub fn normalizer_closed_form(u_size: usize, lambda: f64) -> f64 {
    u_size as f64 * (4.0 - lambda).ln()
}

/// log P(pk, pj | U, lambda) as a function of delta = |pk \ pj|.
///
/// At lambda = 1 with delta > 0 the prior is exactly zero and `-inf` is
/// returned; downstream log-space sums treat it as a missing term.
pub fn log_prior_fixed_lambda(delta: usize, u_size: usize, lambda: f64) -> Result<f64, PriorError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PriorError::LambdaOutOfRange(lambda));
    }
    if delta > u_size {
        return Err(PriorError::DeltaOutOfRange { delta, u_size });
    }
    // (1 - lambda)^0 = 1 even at lambda = 1
    let penalty = if delta == 0 { 0.0 } else { delta as f64 * (1.0 - lambda).ln() };
    Ok(penalty - normalizer_closed_form(u_size, lambda))
}

const SERIES_MAX_TERMS: usize = 10_000;
const SERIES_REL_EPS: f64 = 1e-16;

/// Gauss hypergeometric series 2F1(a, 1; c; 1/4) for integer a >= 0, c >= 2.
///
/// Forward term recurrence; successive term ratios tend to 1/4, so the sum
/// converges geometrically for every argument the prior needs.
pub fn hyp2f1_quarter(a: usize, c: usize) -> Result<f64, PriorError> {
    debug_assert!(c >= 2);
    let mut sum = 0.0f64;
    let mut term = 1.0f64;
    for t in 0..SERIES_MAX_TERMS {
        sum += term;
        term *= (a as f64 + t as f64) / (c as f64 + t as f64) * 0.25;
        if term.abs() < SERIES_REL_EPS * sum {
            return Ok(sum);
        }
    }
    Err(PriorError::SeriesDiverged(SERIES_MAX_TERMS))
}

/// log of the lambda-averaged prior: the integral of the fixed-strength
/// prior over lambda uniform on [0, 1], in closed form.
pub fn log_prior_bma(delta: usize, u_size: usize) -> f64 {
    let f = hyp2f1_quarter(u_size, delta + 2)
        .expect("series converges for all in-range integer arguments");
    f.ln() - u_size as f64 * 4.0f64.ln() - ((delta + 1) as f64).ln()
}

/// Normalizer restricted to pairs of sets with at most `cap` members each:
/// sum over (d, t, b) = (|A\B|, |A&B|, |B\A|) of the multinomial count
/// times (1 - lambda)^d.
pub fn log_normalizer_truncated(u_size: usize, lambda: f64, cap: usize) -> f64 {
    let mut total = 0.0f64;
    for d in 0..=cap.min(u_size) {
        let pen = if d == 0 { 1.0 } else { (1.0 - lambda).powi(d as i32) };
        for t in 0..=(cap - d).min(u_size - d) {
            for b in 0..=cap.saturating_sub(t).min(u_size - d - t) {
                let ways = crate::scoring::binom_u128(u_size, d)
                    * crate::scoring::binom_u128(u_size - d, t)
                    * crate::scoring::binom_u128(u_size - d - t, b);
                total += ways as f64 * pen;
            }
        }
    }
    total.ln()
}

fn log_prior_bma_truncated(delta: usize, u_size: usize, cap: usize) -> f64 {
    let f = |lambda: f64| {
        let pen = if delta == 0 { 1.0 } else { (1.0 - lambda).powi(delta as i32) };
        pen / log_normalizer_truncated(u_size, lambda, cap).exp()
    };
    adaptive_simpson(&f, 0.0, 1.0, 1e-13).ln()
}

/// Adaptive Simpson quadrature with interval-halving error control.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Precomputed log prior over the (|U|, delta) grid so the engines never
/// evaluate the series or the quadrature in inner loops.
#[derive(Debug, Clone)]
pub struct TransferPriorTable {
    mode: PriorMode,
    cap: usize,
    normalization: Normalization,
    /// values[u][delta] for delta in 0..=min(cap, u)
    values: Vec<Vec<f64>>,
}

impl TransferPriorTable {
    /// Covers |U| in 0..n-1 and delta in 0..=min(cap, |U|), closed-form
    /// normalizer.
    pub fn build(n: usize, mode: PriorMode, cap: usize) -> Result<Self, PriorError> {
        Self::build_with(n, mode, cap, Normalization::ClosedForm)
    }

    pub fn build_with(
        n: usize,
        mode: PriorMode,
        cap: usize,
        normalization: Normalization,
    ) -> Result<Self, PriorError> {
        if let PriorMode::FixedLambda(lambda) = mode {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(PriorError::LambdaOutOfRange(lambda));
            }
        }
        let mut values = Vec::with_capacity(n);
        for u in 0..n {
            let dmax = cap.min(u);
            let mut row = Vec::with_capacity(dmax + 1);
            for delta in 0..=dmax {
                let v = match (mode, normalization) {
                    (PriorMode::FixedLambda(l), Normalization::ClosedForm) => {
                        log_prior_fixed_lambda(delta, u, l)?
                    }
                    (PriorMode::FixedLambda(l), Normalization::Truncated) => {
                        let pen =
                            if delta == 0 { 0.0 } else { delta as f64 * (1.0 - l).ln() };
                        pen - log_normalizer_truncated(u, l, cap)
                    }
                    (PriorMode::Bma, Normalization::ClosedForm) => log_prior_bma(delta, u),
                    (PriorMode::Bma, Normalization::Truncated) => {
                        log_prior_bma_truncated(delta, u, cap)
                    }
                };
                row.push(v);
            }
            values.push(row);
        }
        Ok(Self { mode, cap, normalization, values })
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn log_value(&self, u_size: usize, delta: usize) -> f64 {
        self.values[u_size][delta]
    }
}
