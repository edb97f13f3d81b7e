//! Log-space arithmetic. All probability sums in the engines go through
//! these helpers with a max-shift, so tiny products stay representable.

/// log(exp(a) + exp(b)), tolerant of `-inf` on either side.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log of the sum of exp over a slice, summed left to right after the shift.
/// The fixed traversal order keeps results bit-identical across runs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        debug_assert!(!x.is_nan());
        if x > hi {
            hi = x;
        }
    }
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += (x - hi).exp();
    }
    hi + sum.ln()
}
