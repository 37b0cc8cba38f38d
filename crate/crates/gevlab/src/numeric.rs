//! Small numeric utilities shared across modules: compensated summation and
//! log-domain arithmetic. These are deliberately minimal — just the pieces
//! the likelihood accumulators and the log-domain quadrature need.

/// Kahan–Babuška (Neumaier) compensated accumulator.
///
/// Guards the long sums over observations (n up to ~10⁵ here) against
/// cancellation growth; the running error term is added back on read-out.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        // Compensation is meaningless once the sum leaves the finite
        // range, and the usual formula would fabricate NaN from ∞ − ∞;
        // let the plain IEEE result (±∞ or NaN) propagate instead.
        if !t.is_finite() {
            self.sum = t;
            self.comp = 0.0;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `log(exp(a) + exp(b))` without overflow; `-inf` inputs behave as zeros.
#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) − exp(b))` for `a ≥ b`; returns `-inf` when the difference
/// underflows and `NaN` when `a < b` (caller decides how to treat that).
#[inline]
pub(crate) fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a < b {
        return f64::NAN;
    }
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Log-sum-exp over a slice; empty input or all `-inf` gives `-inf`.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add((x - m).exp());
    }
    m + acc.value().ln()
}
