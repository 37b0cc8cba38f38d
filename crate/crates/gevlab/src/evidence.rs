//! Normalizing constant (evidence) of the GEV posterior by deterministic
//! adaptive quadrature, and its decomposition into region masses.
//!
//! For scale-invariant priors `π ∝ g(ξ)/τ` the scale integrates out in
//! closed form. Writing `β = μ − τ/ξ` and `v_i = ξ(Y_i − β) > 0`, one
//! substitution turns the triple integral into
//!
//! ```text
//! C_n = ∫∫ g(ξ) · Γ(n) · |ξ| · Π v_i^{−1−1/ξ} · (Σ v_i^{−1/ξ})^{−n} dβ dξ
//! ```
//!
//! over the two branches `{ξ>0, β<Y_(1)}` and `{ξ<0, β>Y_(n)}`. Truncating
//! the scale integral at `τ* = τ₀+r₃` instead replaces `Γ(n)` by the lower
//! or upper incomplete gamma `γ(n,q)` / `Γ(n,q)` with
//! `q = τ*^{1/ξ}·Σ v_i^{−1/ξ}`, which is how the region masses below pick
//! up their scale-truncation factors.
//!
//! Numerical backbone decisions, each load-bearing:
//!
//! * **Pivot form.** The integrand is evaluated relative to the smallest
//!   observation: with `b₁ > 0` the distance from `β` to `Y_(1)` and
//!   `d_i = log(v_i/v₁)` computed as `log1p(±(Y_i−Y_(1))/b₁)` from exact
//!   data differences, the identity
//!   `log h = log g + log Γ(n) + log|ξ| − n·log v₁ − (1+1/ξ)Σd_i − n·LSE`
//!   holds with `LSE = log Σ exp(−d_i/ξ) ∈ [0, log n]` (the maximal term
//!   is the pivot's, on both branches). All `1/ξ`-sized cancellations
//!   drop out *analytically*, so the form stays accurate down to
//!   `|ξ| = 1e−10` and the ξ ≈ 0 seam needs no special treatment beyond
//!   a sliver bound.
//! * **Endpoint power singularity.** For `ξ > n−1` the integrand grows
//!   like `b₁^{c−1}` with `c = (n−1)/ξ < 1` as `β → Y_(1)` — integrable
//!   but unresolvable by bisection. Substituting `m = b₁^c` cancels the
//!   singular power exactly; the near-endpoint section is integrated in
//!   `m` whenever `c` falls below [`SINGULAR_SPLIT_C`].
//! * **Unbounded axes.** β tails map through `β = A ∓ s₀(1−u)/u`, the
//!   ξ upper tail through `ξ = Ξ/v`; Ξ doubles until the mapped tail
//!   contributes a negligible fraction of the total.
//!
//! Proper priors admit no closed scale reduction; evidence then runs as a
//! full 3-dimensional nested cubature in `(ξ, log τ, μ)` (also used as an
//! independent cross-check of the reduced route at small n, since the two
//! share no parametrization, no reduction step, and no seam handling).

use crate::estimation::{local_mle, observed_info, MleFit};
use crate::gev::{GevParams, Sample, XI_LOWER};
use crate::likelihood::log_likelihood;
use crate::numeric::{log_add_exp, log_sub_exp, log_sum_exp, KahanSum};
use crate::priors::{PriorSpec, ShapeWeight};
use crate::quad::{integrate_log, LogQuadResult};
use crate::specfun::{ln_gamma_lower_reg, ln_gamma_upper_reg, log_gamma, EULER_GAMMA};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::f64::consts::{E, PI};

/// Offset above the admissible-region edge ξ = −1/2 at which the shape
/// integration starts (the integrand is finite at the edge; the offset
/// only avoids evaluating exactly on it).
pub const XI_DOMAIN_EPS: f64 = 1e-9;
/// Half-width of the shape sliver `(−floor, +floor)` that is bounded
/// rather than integrated. The pivot form is stable well below this; the
/// floor exists only because the reduced parametrization is undefined
/// exactly at ξ = 0.
pub const XI_STRIP_FLOOR: f64 = 1e-10;
/// The near-endpoint `m = b₁^c` section activates when `c = (n−1)/ξ`
/// falls below this (endpoint decay too weak for plain bisection to
/// resolve efficiently).
pub const SINGULAR_SPLIT_C: f64 = 4.0;
/// Default small-ball radius of the region decomposition.
pub const BALL_RADIUS_DEFAULT: f64 = 0.2;
/// Inner (nested) quadrature runs this much tighter than the outer level.
const INNER_TOL_FACTOR: f64 = 0.1;
/// Doubling rounds allowed for the ξ upper cutoff.
const XI_GROW_ROUNDS: usize = 8;
/// Panel budgets per nesting level. Generous relative to observed needs
/// (typical runs use well under a quarter); exhaustion flags the result
/// as unconverged instead of spinning.
const MAX_PANELS_OUTER: usize = 250;
const MAX_PANELS_INNER: usize = 300;
const MAX_PANELS_TAIL: usize = 150;
/// Innermost μ sweeps in the direct 3-D route run at every (τ, ξ) node,
/// so their budget dominates total cost; 150 panels resolve the smooth
/// unimodal slices everywhere that matters, and the unconverged-error
/// accounting covers the far-tail slices that would burn more.
const MAX_PANELS_MU: usize = 150;

/// Which route produced an evidence value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceMethod {
    /// Scale-reduced double integral over (β, ξ).
    #[serde(rename = "reduced-2d")]
    Reduced2d,
    /// Nested cubature over (ξ, log τ, μ).
    #[serde(rename = "full-3d")]
    Full3d,
}

/// Evidence value with its quadrature diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvidenceResult {
    /// log C_n.
    pub log_cn: f64,
    /// Error estimate in log space (log of the absolute error of C_n;
    /// subtract `log_cn` for the relative figure).
    pub abs_err_log: f64,
    /// Route used.
    pub method: EvidenceMethod,
    /// All component integrals met their tolerances.
    pub converged: bool,
    /// Innermost integrand evaluations across all pieces.
    pub evals: u64,
    /// Realized shape upper cutoff (the tail beyond it is integrated
    /// through the ξ = Ξ/v map and included in the value).
    pub xi_max: f64,
    /// Log of the bound on the un-integrated shape sliver
    /// `|ξ| <` [`XI_STRIP_FLOOR`] (reduced route only; −∞ for 3D).
    pub log_sliver_bound: f64,
}

impl EvidenceResult {
    /// Relative error estimate of C_n (linear scale).
    pub fn rel_err(&self) -> f64 {
        (self.abs_err_log - self.log_cn).exp()
    }
}

/// Run the panel engine. Structural failures — NaN in the integrand or a
/// degenerate interval — set the `trouble` flag; plain non-convergence
/// does not (the caller decides whether the achieved error matters, since
/// budget exhaustion on a component astronomically below the total is
/// harmless and routinely happens in far tails).
fn run_quad<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    seeds: &[f64],
    rel_tol: f64,
    max_panels: usize,
    trouble: &Cell<bool>,
) -> LogQuadResult {
    match integrate_log(f, a, b, seeds, rel_tol, max_panels) {
        Ok(r) => {
            if r.nan_seen {
                trouble.set(true);
            }
            if (!r.converged || r.nan_seen) && std::env::var("GEVLAB_QUAD_DEBUG").is_ok() {
                eprintln!(
                    "quad trouble: ({a}, {b}) tol {rel_tol} panels {} conv {} nan {} val {} relerr {:.3e}",
                    r.panels,
                    r.converged,
                    r.nan_seen,
                    r.log_value,
                    (r.log_abs_err - r.log_value).exp()
                );
            }
            r
        }
        Err(_) => {
            trouble.set(true);
            LogQuadResult {
                log_value: f64::NEG_INFINITY,
                log_abs_err: f64::NEG_INFINITY,
                evals: 0,
                panels: 0,
                converged: false,
                nan_seen: false,
            }
        }
    }
}

/// Generous change-of-variables allowance when converting a pointwise
/// absolute-error density of an inner integral into a bound on its
/// contribution to the enclosing integral: bound ≤ density × width ×
/// this factor. Deliberately loose — the bound only has to distinguish
/// "astronomically negligible" from "possibly significant".
const FAIL_WIDTH_FACTOR: f64 = 1e4;

// ---------------------------------------------------------------------------
// Reduced integrand
// ---------------------------------------------------------------------------

/// Scale-truncation factor: none (full Γ(n)), regularized lower gamma
/// P(n, q), or regularized upper gamma Q(n, q).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TauFactor {
    Full,
    Lower,
    Upper,
}

/// β integration range of an inner marginal.
#[derive(Clone, Copy, Debug)]
enum BetaRange {
    /// Positive branch, β ∈ (−∞, Y_(1)).
    FullPos,
    /// Positive branch, β ∈ (−∞, cut) with cut < Y_(1).
    UpTo(f64),
    /// Positive branch, β ∈ (cut, Y_(1)).
    Between(f64),
    /// Negative branch, β ∈ (Y_(n), ∞).
    FullNeg,
}

/// Shared state of the reduced-route integrals.
struct Ctx2d<'a> {
    ys: &'a [f64],
    n: f64,
    lgn: f64,
    sw: ShapeWeight,
    /// Length scale of the β tail maps and endpoint splits — the fitted
    /// scale or a data-spread fallback. Seed placement only; values never
    /// depend on it.
    s0: f64,
    tau_factor: TauFactor,
    /// log(τ₀ + r₃) when a scale-truncation factor is active.
    log_tau_hi: f64,
    /// ξ of the marginal currently being integrated (the truncation
    /// factor needs it; a Cell keeps the integrand closures unary).
    current_xi: Cell<f64>,
    inner_tol: f64,
    evals: Cell<u64>,
    trouble: Cell<bool>,
    /// Running max of the absolute-error estimates (log scale) of inner
    /// β-sections that exhausted their panel budget. Folded into the
    /// final error bound; `converged` requires it to be provably
    /// negligible at the requested tolerance.
    inner_fail_density: Cell<f64>,
}

impl<'a> Ctx2d<'a> {
    fn new(sample: &'a Sample, sw: ShapeWeight, theta_hat: GevParams, inner_tol: f64) -> Self {
        let ys = sample.values();
        let spread = (sample.max() - sample.min()).max(f64::MIN_POSITIVE);
        Ctx2d {
            ys,
            n: ys.len() as f64,
            lgn: log_gamma(ys.len() as f64),
            sw,
            s0: theta_hat.tau.max(0.25 * spread),
            tau_factor: TauFactor::Full,
            log_tau_hi: f64::NAN,
            current_xi: Cell::new(f64::NAN),
            inner_tol,
            evals: Cell::new(0),
            trouble: Cell::new(false),
            inner_fail_density: Cell::new(f64::NEG_INFINITY),
        }
    }

    /// Bookkeeping shared by every inner β-section: count evaluations and
    /// record the error density of budget-exhausted sections.
    fn note_inner(&self, r: &LogQuadResult) {
        self.evals.set(self.evals.get() + r.evals as u64);
        if !r.converged {
            let d = self.inner_fail_density.get().max(r.log_abs_err);
            self.inner_fail_density.set(d);
        }
    }

    /// Bound (log scale) on the total-evidence error induced by inner
    /// sections that exhausted their budget. −∞ when all converged.
    fn inner_fail_term(&self, xi_width: f64) -> f64 {
        self.inner_fail_density.get() + (FAIL_WIDTH_FACTOR * (xi_width + 2.0)).ln()
    }

    fn with_factor(mut self, factor: TauFactor, log_tau_hi: f64) -> Self {
        self.tau_factor = factor;
        self.log_tau_hi = log_tau_hi;
        self
    }

    /// d ln h / d ln b₁ at pivot distance b₁ (closed form):
    ///
    /// ```text
    /// −n ± (1 + 1/ξ)·Σ aᵢ ∓ (n/ξ)·Σ wᵢ aᵢ / Σ wᵢ,
    /// aᵢ = sᵢ/(1 ± sᵢ),  sᵢ = (Y_i − Y_(1))/b₁,  wᵢ = e^{−dᵢ/ξ}
    /// ```
    ///
    /// (upper signs for ξ > 0; softmax weights pivot on Y_(1), keeping
    /// every exponent ≤ 0).
    fn slope_lnb1(&self, xi: f64, b1: f64) -> f64 {
        let y1 = self.y1();
        let mut a_sum = KahanSum::new();
        let mut w_sum = KahanSum::new();
        let mut wa_sum = KahanSum::new();
        for &y in self.ys {
            let s = (y - y1) / b1;
            let (a, d) = if xi > 0.0 {
                (s / (1.0 + s), s.ln_1p())
            } else {
                (s / (1.0 - s), (-s).ln_1p())
            };
            let w = (-d / xi).exp();
            a_sum.add(a);
            w_sum.add(w);
            wa_sum.add(w * a);
        }
        let sgn = if xi > 0.0 { 1.0 } else { -1.0 };
        -self.n + sgn * (1.0 + 1.0 / xi) * a_sum.value()
            - sgn * (self.n / xi) * wa_sum.value() / w_sum.value()
    }

    /// Pivot distance b₁ = |β − Y_(1)| of the conditional maximizer of
    /// ln h(·, ξ), found by bisecting [`Self::slope_lnb1`]. A plug-in
    /// predictor μ̂ − τ̂/ξ is *not* good enough for seeding: near ξ ≈ 1
    /// the true distance can be of the same order as the fit noise in
    /// (μ̂, τ̂), so the predicted peak misses the actual one by many
    /// multiples of its width and the quadrature silently drops the
    /// slice's mass.
    fn b1_peak(&self, xi: f64) -> f64 {
        let y1 = self.y1();
        let d_top = self.yn() - y1;
        if !(d_top > 0.0) {
            return self.s0;
        }
        let d_low = self
            .ys
            .iter()
            .map(|y| y - y1)
            .find(|d| *d > 0.0)
            .unwrap_or(d_top);
        // ξ > 0: b₁ ranges over (0, ∞), slope runs from (n−1)/ξ − 1 down
        // to −n. ξ < 0: b₁ > Y_(n) − Y_(1) (support), slope runs from +∞
        // down to −n; parametrize b₁ = d_top(1 + e^q) to pin the lower
        // endpoint exactly.
        let (mut lo, mut hi, to_b1): (f64, f64, fn(f64, f64) -> f64) = if xi > 0.0 {
            (d_low.ln() - 45.0, d_top.ln() + 45.0, |q, _d_top| q.exp())
        } else {
            (-45.0, 45.0, |q, d_top| d_top * (1.0 + q.exp()))
        };
        if self.slope_lnb1(xi, to_b1(lo, d_top)) <= 0.0 {
            // Monotone decreasing from the endpoint: the peak sits at the
            // b₁ → 0⁺ edge (handled by the endpoint section).
            return to_b1(lo, d_top);
        }
        if self.slope_lnb1(xi, to_b1(hi, d_top)) >= 0.0 {
            return to_b1(hi, d_top);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.slope_lnb1(xi, to_b1(mid, d_top)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        to_b1(0.5 * (lo + hi), d_top)
    }

    /// Multiplicative ladder bracketing the conditional peak at ±2, ±6
    /// and ±10 of its *measured* log-scale standard deviation. The naive
    /// curvature n (valid near ξ = 0) overstates the sharpness at
    /// moderate ξ by an order of magnitude — the softmax term flattens
    /// the slice — so the width is measured from a symmetric difference
    /// of the closed-form slope, which subtracts O(1) quantities and
    /// stays well-conditioned where a second difference of ln h itself
    /// (O(10³) values) would lose precision. Seeding panel edges from
    /// the ladder keeps both peak flanks visible to quadrature nodes; a
    /// peak occupying ≲ 10⁻³ of one panel hides between its nodes and
    /// its slice mass is silently dropped.
    fn b1_ladder(&self, xi: f64) -> [f64; 7] {
        let b = self.b1_peak(xi);
        let h = self.n.sqrt().recip();
        let curv =
            -(self.slope_lnb1(xi, b * h.exp()) - self.slope_lnb1(xi, b * (-h).exp())) / (2.0 * h);
        // Fall back to the sharp-peak scale when the measurement is
        // unusable (edge-pinned peak, negative curvature from ties).
        let sd = if curv.is_finite() && curv > 0.0 {
            curv.sqrt().recip().clamp(0.2 * h, 4.0)
        } else {
            h
        };
        [
            b,
            b * (2.0 * sd).exp(),
            b * (-2.0 * sd).exp(),
            b * (6.0 * sd).exp(),
            b * (-6.0 * sd).exp(),
            b * (10.0 * sd).exp(),
            b * (-10.0 * sd).exp(),
        ]
    }

    fn y1(&self) -> f64 {
        self.ys[0]
    }

    fn yn(&self) -> f64 {
        self.ys[self.ys.len() - 1]
    }

    /// log of the reduced integrand at (β, ξ), including any truncation
    /// factor. Both branches pivot on the *smallest* observation: that is
    /// where the log-sum-exp attains its maximal term for either sign of
    /// ξ, so `LSE ∈ [0, log n]` by construction.
    fn ln_h(&self, xi: f64, beta: f64) -> f64 {
        let (b1, sign) = if xi > 0.0 {
            (self.y1() - beta, 1.0)
        } else {
            (beta - self.y1(), -1.0)
        };
        if !(b1 > 0.0) || (xi < 0.0 && beta <= self.yn()) {
            return f64::NEG_INFINITY;
        }
        let y1 = self.y1();
        let mut sum_d = KahanSum::new();
        let mut sum_exp = KahanSum::new();
        for &y in self.ys {
            // d = log(v_i/v₁), from exact data differences: d carries
            // only relative rounding, keeping d/ξ accurate at any |ξ|.
            let d = (sign * (y - y1) / b1).ln_1p();
            sum_d.add(d);
            sum_exp.add((-d / xi).exp());
        }
        let lse = sum_exp.value().ln();
        let ln_v1 = xi.abs().ln() + b1.ln();
        let base = self.sw.log_weight(xi) + self.lgn + xi.abs().ln()
            - self.n * ln_v1
            - (1.0 + 1.0 / xi) * sum_d.value()
            - self.n * lse;
        base + self.tau_factor_log(-ln_v1 / xi + lse)
    }

    /// Near-endpoint section in the variable m = b₁^c, c = (n−1)/ξ: the
    /// substitution cancels the b₁^{c−1} endpoint power exactly, so this
    /// integrand is smooth and bounded on (0, κ^c). Includes the dβ/dm
    /// Jacobian.
    fn ln_h_m_section(&self, xi: f64, m: f64, c: f64) -> f64 {
        let n = self.n;
        let y1 = self.y1();
        let b1 = m.powf(1.0 / c); // may underflow to 0: harmless below
        let mut sum_log = KahanSum::new(); // Σ_{i≥2} log(Δ_i + b₁)
        let mut t_sum = KahanSum::new(); // Σ_{i≥2} (Δ_i + b₁)^{−1/ξ}
        for &y in &self.ys[1..] {
            let dl = (y - y1 + b1).ln();
            sum_log.add(dl);
            t_sum.add((-dl / xi).exp());
        }
        // b₁^{1/ξ} = m^{1/(n−1)}, formed from m so b₁ underflow is moot.
        let b1_pow = m.powf(1.0 / (n - 1.0));
        let lse = (b1_pow * t_sum.value()).ln_1p();
        let base = self.sw.log_weight(xi) + self.lgn + (1.0 - n) * xi.ln()
            - (1.0 + 1.0 / xi) * sum_log.value()
            - n * lse
            - c.ln();
        // ln S = −ln(ξ b₁)/ξ + lse with ln(b₁)/ξ = ln(m)/(n−1).
        let ln_s = -xi.ln() / xi - m.ln() / (n - 1.0) + lse;
        base + self.tau_factor_log(ln_s)
    }

    /// log of the scale-truncation factor given ln Σ v_i^{−1/ξ}.
    fn tau_factor_log(&self, ln_s: f64) -> f64 {
        if self.tau_factor == TauFactor::Full {
            return 0.0;
        }
        let ln_q = self.log_tau_hi / self.current_xi.get() + ln_s;
        let res = if self.tau_factor == TauFactor::Lower {
            ln_gamma_lower_reg(self.n, ln_q)
        } else {
            ln_gamma_upper_reg(self.n, ln_q)
        };
        match res {
            Ok(v) => v,
            Err(_) => {
                self.trouble.set(true);
                f64::NEG_INFINITY
            }
        }
    }

    /// log ∫ h(β, ξ) dβ over `range` at the context's inner tolerance.
    fn inner_marginal(&self, xi: f64, range: BetaRange) -> f64 {
        self.inner_marginal_tol(xi, range, self.inner_tol)
    }

    /// log ∫ h(β, ξ) dβ over `range`, assembled from a tail map, an
    /// optional direct section, and the near-endpoint m-section.
    fn inner_marginal_tol(&self, xi: f64, range: BetaRange, tol: f64) -> f64 {
        self.current_xi.set(xi);
        // Conditional peak of this slice, solved from the stationarity
        // condition. Seeds only; values never depend on it.
        let ladder = self.b1_ladder(xi);
        let mut total = f64::NEG_INFINITY;

        match range {
            BetaRange::FullNeg => {
                let anchor = self.yn();
                let s0 = self.s0;
                // β = Y_(1) + b₁ on this branch; distances from the
                // anchor Y_(n) shift by the sample range.
                let span = anchor - self.y1();
                let mut seeds = vec![0.5];
                for b in ladder {
                    let dist = b - span;
                    if dist > 0.0 {
                        seeds.push(s0 / (s0 + dist));
                    }
                }
                let r = run_quad(
                    |u| {
                        let beta = anchor + s0 * (1.0 - u) / u;
                        self.ln_h(xi, beta) + s0.ln() - 2.0 * u.ln()
                    },
                    0.0,
                    1.0,
                    &seeds,
                    tol,
                    MAX_PANELS_INNER,
                    &self.trouble,
                );
                self.note_inner(&r);
                total = r.log_value;
            }
            BetaRange::FullPos | BetaRange::UpTo(_) | BetaRange::Between(_) => {
                let y1 = self.y1();
                let c = (self.n - 1.0) / xi;
                // The m-section matters only when the range reaches the
                // endpoint Y_(1) with a weak decay exponent.
                let reaches_endpoint = !matches!(range, BetaRange::UpTo(_));
                let (lo_cut, hi) = match range {
                    BetaRange::FullPos => (f64::NEG_INFINITY, y1),
                    BetaRange::UpTo(cut) => (f64::NEG_INFINITY, cut.min(y1)),
                    BetaRange::Between(cut) => (cut, y1),
                    BetaRange::FullNeg => unreachable!(),
                };
                let mut kappa = 0.0;
                if reaches_endpoint && c < SINGULAR_SPLIT_C {
                    kappa = self.s0.min(0.5 * (y1 - lo_cut.max(y1 - 1e300)));
                    let m_hi = kappa.powf(c);
                    if m_hi.is_finite() && m_hi > 0.0 {
                        let r = run_quad(
                            |m| self.ln_h_m_section(xi, m, c),
                            0.0,
                            m_hi,
                            &[0.1 * m_hi, 0.5 * m_hi, 0.9 * m_hi],
                            tol,
                            MAX_PANELS_INNER,
                            &self.trouble,
                        );
                        self.note_inner(&r);
                        total = log_add_exp(total, r.log_value);
                    } else {
                        kappa = 0.0;
                        self.trouble.set(true);
                    }
                }
                let hi_eff = hi - kappa;
                if lo_cut.is_finite() {
                    if hi_eff > lo_cut {
                        let w = hi_eff - lo_cut;
                        let clamp = |b: f64| b.clamp(lo_cut + 1e-6 * w, hi_eff - 1e-6 * w);
                        let mut seeds = vec![lo_cut + 0.5 * w];
                        for b in ladder {
                            seeds.push(clamp(y1 - b));
                        }
                        let r = run_quad(
                            |beta| self.ln_h(xi, beta),
                            lo_cut,
                            hi_eff,
                            &seeds,
                            tol,
                            MAX_PANELS_INNER,
                            &self.trouble,
                        );
                        self.note_inner(&r);
                        total = log_add_exp(total, r.log_value);
                    }
                } else {
                    let anchor = hi_eff;
                    let s0 = self.s0;
                    // β = Y_(1) − b₁; distances from the anchor shift by
                    // the κ offset (or the UpTo cut).
                    let offset = y1 - anchor;
                    let mut seeds = vec![0.5];
                    for b in ladder {
                        let dist = b - offset;
                        if dist > 0.0 {
                            seeds.push(s0 / (s0 + dist));
                        }
                    }
                    let r = run_quad(
                        |u| {
                            let beta = anchor - s0 * (1.0 - u) / u;
                            self.ln_h(xi, beta) + s0.ln() - 2.0 * u.ln()
                        },
                        0.0,
                        1.0,
                        &seeds,
                        tol,
                        MAX_PANELS_INNER,
                        &self.trouble,
                    );
                    self.note_inner(&r);
                    total = log_add_exp(total, r.log_value);
                }
            }
        }
        total
    }
}

/// Scale-reduced integrand of the evidence at one point of the (β, ξ)
/// plane, for a scale-invariant prior. Errors on structurally invalid
/// input: a proper prior, ξ = 0, or a point outside the corresponding
/// branch of the support region.
pub fn reduced_integrand_log(
    beta: f64,
    xi: f64,
    sample: &Sample,
    prior: &PriorSpec,
) -> Result<f64> {
    let Some(sw) = prior.shape_weight() else {
        return Err(Error::Domain(
            "the scale integral has no closed reduction for proper priors; use the 3D route"
                .into(),
        ));
    };
    if xi == 0.0 || xi <= XI_LOWER || !xi.is_finite() {
        return Err(Error::Domain(format!(
            "reduced parametrization needs ξ ∈ (−1/2, 0) ∪ (0, ∞), got {xi}"
        )));
    }
    let inside = if xi > 0.0 {
        beta < sample.min()
    } else {
        beta > sample.max()
    };
    if !inside {
        return Err(Error::SupportViolation(format!(
            "(β, ξ) = ({beta}, {xi}) lies outside the support-region branch"
        )));
    }
    // Seed parameters are irrelevant for a point evaluation.
    let theta = GevParams {
        tau: 1.0,
        mu: 0.0,
        xi: 0.1,
    };
    let ctx = Ctx2d::new(sample, sw, theta, 1e-8);
    Ok(ctx.ln_h(xi, beta))
}

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

/// Evidence by the reduced 2D route (scale-invariant priors) or the 3D
/// route (proper priors). `tol` is the relative tolerance on C_n, which
/// in log space is approximately the absolute tolerance of `log_cn`.
pub fn log_cn(sample: &Sample, prior: &PriorSpec, tol: f64) -> Result<EvidenceResult> {
    prior.validate()?;
    check_evidence_inputs(sample, tol)?;
    match prior.shape_weight() {
        Some(_) => log_cn_reduced(sample, prior, tol),
        None => log_cn_full3d(sample, prior, tol),
    }
}

fn check_evidence_inputs(sample: &Sample, tol: f64) -> Result<()> {
    if sample.n() < 3 {
        return Err(Error::InvalidSample(format!(
            "evidence needs n ≥ 3, got {}",
            sample.n()
        )));
    }
    if !(tol > 0.0 && tol < 0.5) {
        return Err(Error::Domain(format!(
            "tolerance must lie in (0, 0.5), got {tol}"
        )));
    }
    Ok(())
}

/// Fit used for seed placement; falls back to a crude data-scale guess so
/// seed placement never makes the evidence fail.
fn seed_fit(sample: &Sample) -> MleFit {
    match local_mle(sample, None, None) {
        Ok(f) => f,
        Err(_) => MleFit {
            theta: GevParams {
                tau: ((sample.max() - sample.min()) / 4.0).max(1e-6),
                mu: sample.values()[sample.n() / 2],
                xi: 0.1,
            },
            log_lik: f64::NAN,
            score_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            used_fallback: true,
            score_identity_gap: f64::NAN,
        },
    }
}

fn xi_sd_estimate(sample: &Sample, fit: &MleFit) -> f64 {
    observed_info(&fit.theta, sample)
        .ok()
        .and_then(|info| info.as_matrix().try_inverse())
        .map(|cov| cov[(2, 2)].max(1e-8).sqrt())
        .unwrap_or(0.3)
}

/// ξ seeds bracketing the posterior shape peak at ±2, ±6 and ±10
/// marginal standard deviations, plus fixed anchors, filtered to (lo, hi).
/// Panel edges at these offsets keep both flanks of the ξ-peak visible to
/// quadrature nodes even when the integration range is orders of
/// magnitude wider than the peak — with a lone ±2 sd bracket the
/// adjacent panel's nearest node can sit many sd out, and the flank's
/// mass (percent-level) is silently dropped while the quad reports
/// convergence.
fn xi_seed_ladder(xi_hat: f64, sd: f64, lo: f64, hi: f64, anchors: &[f64]) -> Vec<f64> {
    [0.0, -2.0, 2.0, -6.0, 6.0, -10.0, 10.0]
        .iter()
        .map(|k| xi_hat + k * sd)
        .chain(anchors.iter().copied())
        .filter(|s| *s > lo && *s < hi)
        .collect()
}

fn log_cn_reduced(sample: &Sample, prior: &PriorSpec, tol: f64) -> Result<EvidenceResult> {
    let sw = prior.shape_weight().expect("caller checked");
    let fit = seed_fit(sample);
    let sd_xi = xi_sd_estimate(sample, &fit);
    let ctx = Ctx2d::new(sample, sw, fit.theta, tol * INNER_TOL_FACTOR);
    let xi_hat = fit.theta.xi;

    let xi_hi_start = (xi_hat + 10.0).max(2.0);
    let pos_seeds = xi_seed_ladder(xi_hat, sd_xi, XI_STRIP_FLOOR, xi_hi_start, &[0.05]);
    let neg_seeds = xi_seed_ladder(xi_hat, sd_xi, XI_LOWER, -XI_STRIP_FLOOR, &[-0.05, -0.25]);

    // Positive branch with a grown upper cutoff plus a mapped tail.
    let (pos, tail, xi_max) = integrate_pos_branch(
        &ctx,
        BetaRange::FullPos,
        XI_STRIP_FLOOR,
        xi_hi_start,
        &pos_seeds,
        tol,
    );
    // Negative branch.
    let neg = run_quad(
        |xi| ctx.inner_marginal(xi, BetaRange::FullNeg),
        XI_LOWER + XI_DOMAIN_EPS,
        -XI_STRIP_FLOOR,
        &neg_seeds,
        tol,
        MAX_PANELS_OUTER,
        &ctx.trouble,
    );

    // Sliver |ξ| < floor, bounded by width × edge values (the β-marginal
    // is continuous through ξ = 0; the factor 2 absorbs its variation
    // across a 2e−10-wide strip).
    let edge = ctx
        .inner_marginal(XI_STRIP_FLOOR, BetaRange::FullPos)
        .max(ctx.inner_marginal(-XI_STRIP_FLOOR, BetaRange::FullNeg));
    let log_sliver = (4.0 * XI_STRIP_FLOOR).ln() + edge;

    let log_total = log_sum_exp(&[pos.log_value, tail.log_value, neg.log_value]);
    let fail_term = ctx.inner_fail_term(xi_max);
    let abs_err_log = log_sum_exp(&[
        pos.log_abs_err,
        tail.log_abs_err,
        neg.log_abs_err,
        log_sliver,
        fail_term,
        // Inner tolerances propagate multiplicatively; factor 3 keeps the
        // estimate conservative.
        log_total + (3.0 * tol * INNER_TOL_FACTOR).ln(),
    ]);
    Ok(EvidenceResult {
        log_cn: log_total,
        abs_err_log,
        method: EvidenceMethod::Reduced2d,
        // Inner-section budget exhaustion is tolerable only when its
        // error bound is negligible at the requested tolerance.
        converged: pos.converged
            && tail.converged
            && neg.converged
            && !ctx.trouble.get()
            && fail_term <= log_total + tol.ln(),
        evals: ctx.evals.get(),
        xi_max,
        log_sliver_bound: log_sliver,
    })
}

/// Positive-branch ξ integral on (lo, Ξ) plus the (Ξ, ∞) tail through
/// ξ = Ξ/v, v ∈ (0, 1). Ξ doubles until the tail is a negligible
/// fraction of the branch total.
fn integrate_pos_branch(
    ctx: &Ctx2d,
    range: BetaRange,
    lo: f64,
    xi_hi_start: f64,
    seeds: &[f64],
    tol: f64,
) -> (LogQuadResult, LogQuadResult, f64) {
    let mut xi_hi = xi_hi_start;
    let mut rounds = 0;
    loop {
        let main = run_quad(
            |xi| ctx.inner_marginal(xi, range),
            lo,
            xi_hi,
            seeds,
            tol,
            MAX_PANELS_OUTER,
            &ctx.trouble,
        );
        // The tail only has to be located to within its own (loose)
        // tolerance, so its inner marginals run looser as well.
        let tail_tol = (tol * 10.0).min(1e-2);
        let tail = run_quad(
            |v| {
                ctx.inner_marginal_tol(xi_hi / v, range, tail_tol * INNER_TOL_FACTOR)
                    + xi_hi.ln()
                    - 2.0 * v.ln()
            },
            0.0,
            1.0,
            &[0.5, 0.9],
            tail_tol,
            MAX_PANELS_TAIL,
            &ctx.trouble,
        );
        let negligible =
            tail.log_value <= log_add_exp(main.log_value, tail.log_value) + (tol * 0.25).ln();
        rounds += 1;
        if negligible || rounds >= XI_GROW_ROUNDS {
            if !negligible {
                ctx.trouble.set(true);
            }
            return (main, tail, xi_hi);
        }
        xi_hi *= 2.0;
    }
}

// ---------------------------------------------------------------------------
// Full 3D route
// ---------------------------------------------------------------------------

/// Evidence by nested cubature over (ξ, log τ, μ) — the only route for
/// proper priors, and an independent cross-check of the reduced route
/// (different coordinates, no reduction, and no ξ = 0 sliver: this
/// integrand is smooth through the Gumbel line).
pub fn log_cn_full3d(sample: &Sample, prior: &PriorSpec, tol: f64) -> Result<EvidenceResult> {
    prior.validate()?;
    check_evidence_inputs(sample, tol)?;
    let fit = seed_fit(sample);
    let th = fit.theta;
    let sd_xi = xi_sd_estimate(sample, &fit);
    let y1 = sample.min();
    let yn = sample.max();
    let s0 = th.tau.max(0.25 * (yn - y1));
    let evals = Cell::new(0u64);
    let trouble = Cell::new(false);
    let fail_density = Cell::new(f64::NEG_INFINITY);
    let note = |r: &LogQuadResult| {
        if !r.converged {
            fail_density.set(fail_density.get().max(r.log_abs_err));
        }
        r.log_value
    };
    let mid_tol = tol * 0.1;
    let inner_tol = tol * 0.03;

    // Innermost: μ at fixed (τ, ξ). The support bound μ < Y_(1) + τ/ξ
    // (ξ > 0) or μ > Y_(n) + τ/ξ (ξ < 0) anchors a one-sided map — this
    // keeps the likelihood's hard edge at the map's own endpoint instead
    // of mid-interval, where it stalls bisection. Only when ξ is so small
    // that the bound recedes beyond what bisection can reach (~2^60 length
    // scales) does a symmetric two-sided map take over; the likelihood has
    // then underflowed to an exact zero long before any reachable edge.
    let mu_integral = |tau: f64, xi: f64| -> f64 {
        let log_joint = |mu: f64| {
            evals.set(evals.get() + 1);
            let theta = GevParams { tau, mu, xi };
            let lp = prior.log_density(&theta);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            log_likelihood(&theta, sample) + lp
        };
        let bound = if xi > 0.0 {
            y1 + tau / xi
        } else if xi < 0.0 {
            yn + tau / xi
        } else {
            f64::INFINITY
        };
        let dist = if xi > 0.0 { bound - th.mu } else { th.mu - bound };
        let res = if xi != 0.0 && dist.is_finite() && dist < s0 * 1e18 {
            let sign = if xi > 0.0 { -1.0 } else { 1.0 };
            let u_star = s0 / (s0 + dist.max(s0 * 1e-12));
            // Bracket the conditional μ peak (width ≈ τ/√n around μ̂) so
            // its flanks never hide between the nodes of a wide panel —
            // near the Gumbel line the bound recedes and u* becomes tiny
            // relative to panel widths.
            let sd_mu = tau / (sample.n() as f64).sqrt();
            let mut seeds = vec![u_star, 0.5 * u_star, 0.5];
            for k in [-6.0, -2.0, 2.0, 6.0] {
                let d_k = dist - k * sd_mu;
                if d_k > 0.0 {
                    seeds.push(s0 / (s0 + d_k));
                }
            }
            run_quad(
                |u| log_joint(bound + sign * s0 * (1.0 - u) / u) + s0.ln() - 2.0 * u.ln(),
                0.0,
                1.0,
                &seeds,
                inner_tol,
                MAX_PANELS_MU,
                &trouble,
            )
        } else {
            run_quad(
                |t| {
                    let om = 1.0 - t * t;
                    let mu = th.mu + s0 * t / om;
                    log_joint(mu) + (s0 * (1.0 + t * t) / (om * om)).ln()
                },
                -1.0,
                1.0,
                &[-0.5, 0.0, 0.5],
                inner_tol,
                MAX_PANELS_MU,
                &trouble,
            )
        };
        note(&res)
    };

    // Middle: τ = τ̂ e^t on t ∈ (−20, 20). The likelihood is O(τ^{−n}) as
    // τ → ∞ and dies double-exponentially as τ → 0, so with n ≥ 3 the
    // truncated tails are below e^{−40} relative — far under any accepted
    // tolerance.
    let tau_integral = |xi: f64| -> f64 {
        let r = run_quad(
            |t| mu_integral(th.tau * t.exp(), xi) + th.tau.ln() + t,
            -20.0,
            20.0,
            &[-0.5, 0.0, 0.5],
            mid_tol,
            MAX_PANELS_INNER,
            &trouble,
        );
        note(&r)
    };

    // Outer: ξ straight through the Gumbel line, cutoff grown as needed.
    let mut xi_hi = (th.xi + 10.0).max(2.0);
    let mut rounds = 0;
    let (main, tail) = loop {
        let seeds = xi_seed_ladder(th.xi, sd_xi, XI_LOWER + XI_DOMAIN_EPS, xi_hi, &[0.0]);
        let main = run_quad(
            &tau_integral,
            XI_LOWER + XI_DOMAIN_EPS,
            xi_hi,
            &seeds,
            tol,
            MAX_PANELS_OUTER,
            &trouble,
        );
        let tail = run_quad(
            |v| tau_integral(xi_hi / v) + xi_hi.ln() - 2.0 * v.ln(),
            0.0,
            1.0,
            &[0.5, 0.9],
            (tol * 10.0).min(1e-2),
            MAX_PANELS_TAIL,
            &trouble,
        );
        let negligible =
            tail.log_value <= log_add_exp(main.log_value, tail.log_value) + (tol * 0.25).ln();
        rounds += 1;
        if negligible || rounds >= XI_GROW_ROUNDS {
            if !negligible {
                trouble.set(true);
            }
            break (main, tail);
        }
        xi_hi *= 2.0;
    };
    let log_total = log_add_exp(main.log_value, tail.log_value);
    // Inner (μ) error densities propagate through the τ level with
    // bounded change-of-variables stretch; the width factor covers both
    // nesting levels.
    let fail_term = fail_density.get() + (FAIL_WIDTH_FACTOR * 40.0 * (xi_hi + 2.0)).ln();
    let abs_err_log = log_sum_exp(&[
        main.log_abs_err,
        tail.log_abs_err,
        fail_term,
        log_total + (3.0 * (mid_tol + inner_tol)).ln(),
    ]);
    Ok(EvidenceResult {
        log_cn: log_total,
        abs_err_log,
        method: EvidenceMethod::Full3d,
        converged: main.converged
            && tail.converged
            && !trouble.get()
            && fail_term <= log_total + tol.ln(),
        evals: evals.get(),
        xi_max: xi_hi,
        log_sliver_bound: f64::NEG_INFINITY,
    })
}

// ---------------------------------------------------------------------------
// Region radii
// ---------------------------------------------------------------------------

/// Radii of the five-region decomposition around θ₀ (positive-shape
/// case). The growth conditions are sufficient bounds, so the radii are
/// deliberately conservative; `r3` in particular is astronomically large
/// for moderate ξ₀ (it overflows f64 below ξ₀ ≈ 0.35 — the exact value is
/// kept in log form and `r3` itself saturates to +∞).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegionRadii {
    /// Small-ball radius around θ̂ (Euclidean in (τ, μ, ξ)).
    pub r: f64,
    /// Shape radius: the ξ-tail region starts at ξ₀ + r1.
    pub r1: f64,
    /// Endpoint radius: the β-tail region starts below β₀ − r2.
    pub r2: f64,
    /// Scale radius: the τ-tail region starts above τ₀ + r3 (+∞ in f64
    /// when ξ₀ is moderate; see `log1p_r3_over_tau0`).
    pub r3: f64,
    /// Exact log(1 + r3/τ₀) (always finite).
    pub log1p_r3_over_tau0: f64,
    /// ξ₀ + r1.
    pub xi_hi: f64,
    /// β₀ − r2, the β cut between the central box and the β-tail.
    pub beta_cut: f64,
    /// log(τ₀ + r3), the τ cut in log form.
    pub log_tau_hi: f64,
}

/// Thresholds (without margin) the radii must strictly exceed:
/// `log(1+r1/ξ₀) > 4/ξ₀ − log 2 + γ`, `r2 > 1`, and
/// `log(1+r3/τ₀) > (ξ₀+r1+1)·log((ξ₀+r1+1)/e) + (1+ξ₀)γ + 1`.
/// Returned as (first, third); the second is the constant 1.
pub fn radii_thresholds(theta0: &GevParams, r1: f64) -> (f64, f64) {
    let xi0 = theta0.xi;
    let t1 = 4.0 / xi0 - 2.0f64.ln() + EULER_GAMMA;
    let a = xi0 + r1 + 1.0;
    let t3 = a * (a / E).ln() + (1.0 + xi0) * EULER_GAMMA + 1.0;
    (t1, t3)
}

/// Minimal radii satisfying the growth conditions with a 1% log-scale
/// margin, for ξ₀ > 0 (the decomposition is defined on the positive-shape
/// side only; other cases are refused rather than guessed).
pub fn region_radii(theta0: &GevParams) -> Result<RegionRadii> {
    GevParams::new(theta0.tau, theta0.mu, theta0.xi)?;
    let xi0 = theta0.xi;
    if !(xi0 > 0.0) {
        return Err(Error::Domain(format!(
            "region decomposition requires a positive true shape, got ξ₀ = {xi0}"
        )));
    }
    let (t1, _) = radii_thresholds(theta0, 0.0);
    let r1 = xi0 * (1.01 * t1).exp_m1();
    let (_, t3) = radii_thresholds(theta0, r1);
    let log1p_r3 = 1.01 * t3;
    let r3 = theta0.tau * log1p_r3.exp_m1(); // may overflow to +∞
    let beta0 = theta0.to_beta()?.beta;
    Ok(RegionRadii {
        r: BALL_RADIUS_DEFAULT,
        r1,
        r2: 1.01,
        r3,
        log1p_r3_over_tau0: log1p_r3,
        xi_hi: xi0 + r1,
        beta_cut: beta0 - 1.01,
        log_tau_hi: theta0.tau.ln() + log1p_r3,
    })
}

impl RegionRadii {
    /// Re-check the strict growth inequalities at θ₀, plus the basic
    /// requirement that the ball radius not exceed the box margins.
    pub fn satisfied_at(&self, theta0: &GevParams) -> bool {
        let (t1, t3) = radii_thresholds(theta0, self.r1);
        (self.r1 / theta0.xi).ln_1p() > t1
            && self.r2 > 1.0
            && self.log1p_r3_over_tau0 > t3
            && self.r < self.r1
            && self.r < self.r2
            && (self.r / theta0.tau).ln_1p() < self.log1p_r3_over_tau0
    }
}

// ---------------------------------------------------------------------------
// Region masses
// ---------------------------------------------------------------------------

/// Log masses of the five-region decomposition plus the central ball.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionMasses {
    /// log C_n^k for k = 1..5: central box minus ball, ξ-tail, β-tail,
    /// τ-tail, negative-shape branch.
    pub log_mass: [f64; 5],
    /// log mass of the ball B_r(θ̂).
    pub log_ball: f64,
    /// logsumexp of all six pieces (should reproduce log C_n).
    pub log_total: f64,
    /// Combined error estimate in log space.
    pub abs_err_log: f64,
    /// Bound on the un-integrated shape sliver.
    pub log_sliver_bound: f64,
    /// All component integrals converged and the box-minus-ball
    /// subtraction was well-posed.
    pub converged: bool,
    /// The ball was verified (conservatively) to sit inside the central
    /// box, which the box-minus-ball identity requires.
    pub ball_inside_box: bool,
    /// Innermost integrand evaluations across all pieces.
    pub evals: u64,
}

/// Decompose the evidence into the five region masses plus the ball.
/// Requires a scale-invariant prior, a fit with ξ̂ > 0 (the ball is
/// carved out of the positive-shape box), and radii computed at the
/// (known, e.g. simulation-true) θ₀.
pub fn region_masses(
    sample: &Sample,
    prior: &PriorSpec,
    radii: &RegionRadii,
    fit: &MleFit,
    tol: f64,
) -> Result<RegionMasses> {
    let Some(sw) = prior.shape_weight() else {
        return Err(Error::Domain(
            "region decomposition is defined for scale-invariant priors only".into(),
        ));
    };
    prior.validate()?;
    check_evidence_inputs(sample, tol)?;
    if !(fit.theta.xi > 0.0) {
        return Err(Error::Domain(format!(
            "region decomposition requires ξ̂ > 0, got ξ̂ = {}",
            fit.theta.xi
        )));
    }
    let inner_tol = tol * INNER_TOL_FACTOR;
    let sd_xi = xi_sd_estimate(sample, fit);
    let xi_hat = fit.theta.xi;
    let mk_seeds =
        |lo: f64, hi: f64| -> Vec<f64> { xi_seed_ladder(xi_hat, sd_xi, lo, hi, &[0.05, 1.0]) };

    let mut evals = 0u64;
    let mut trouble = false;
    let mut errs: Vec<f64> = Vec::new();

    // Central box (scale-truncated, lower gamma) over β ∈ (β̃, Y_(1)),
    // ξ ∈ (floor, ξ₀+r1).
    let ctx_box = Ctx2d::new(sample, sw, fit.theta, inner_tol)
        .with_factor(TauFactor::Lower, radii.log_tau_hi);
    let box_res = run_quad(
        |xi| ctx_box.inner_marginal(xi, BetaRange::Between(radii.beta_cut)),
        XI_STRIP_FLOOR,
        radii.xi_hi,
        &mk_seeds(XI_STRIP_FLOOR, radii.xi_hi),
        tol,
        MAX_PANELS_OUTER,
        &ctx_box.trouble,
    );
    errs.push(box_res.log_abs_err);

    // β-tail (lower gamma) over β ∈ (−∞, β̃), same ξ range.
    let ctx3 = Ctx2d::new(sample, sw, fit.theta, inner_tol)
        .with_factor(TauFactor::Lower, radii.log_tau_hi);
    let c3_res = run_quad(
        |xi| ctx3.inner_marginal(xi, BetaRange::UpTo(radii.beta_cut)),
        XI_STRIP_FLOOR,
        radii.xi_hi,
        &mk_seeds(XI_STRIP_FLOOR, radii.xi_hi),
        tol,
        MAX_PANELS_OUTER,
        &ctx3.trouble,
    );
    errs.push(c3_res.log_abs_err);

    // τ-tail (upper gamma) over the full β range of the branch. With the
    // conservative radii the upper-gamma factor is doubly-exponentially
    // small in (τ₀+r₃)^{1/ξ}; an exact numerical zero is the norm.
    let ctx4 = Ctx2d::new(sample, sw, fit.theta, inner_tol)
        .with_factor(TauFactor::Upper, radii.log_tau_hi);
    let c4_res = run_quad(
        |xi| ctx4.inner_marginal(xi, BetaRange::FullPos),
        XI_STRIP_FLOOR,
        radii.xi_hi,
        &mk_seeds(XI_STRIP_FLOOR, radii.xi_hi),
        tol,
        MAX_PANELS_OUTER,
        &ctx4.trouble,
    );
    errs.push(c4_res.log_abs_err);

    // ξ-tail (full scale range) over ξ > ξ₀+r1.
    let ctx2 = Ctx2d::new(sample, sw, fit.theta, inner_tol);
    let (c2_main, c2_tail, c2_xi_max) = integrate_pos_branch(
        &ctx2,
        BetaRange::FullPos,
        radii.xi_hi,
        2.0 * radii.xi_hi,
        &[1.25 * radii.xi_hi],
        tol,
    );
    let log_c2 = log_add_exp(c2_main.log_value, c2_tail.log_value);
    errs.push(c2_main.log_abs_err);
    errs.push(c2_tail.log_abs_err);

    // Negative-shape branch.
    let ctx5 = Ctx2d::new(sample, sw, fit.theta, inner_tol);
    let c5_res = run_quad(
        |xi| ctx5.inner_marginal(xi, BetaRange::FullNeg),
        XI_LOWER + XI_DOMAIN_EPS,
        -XI_STRIP_FLOOR,
        &[-0.05, -0.25, -0.45],
        tol,
        MAX_PANELS_OUTER,
        &ctx5.trouble,
    );
    errs.push(c5_res.log_abs_err);

    // Ball mass around θ̂.
    let ball = ball_mass_log(sample, prior, &fit.theta, radii.r, tol)?;
    evals += ball.evals;
    errs.push(ball.log_abs_err);

    // Sliver bound (both sides of ξ = 0).
    let edge = ctx_box
        .inner_marginal(XI_STRIP_FLOOR, BetaRange::FullPos)
        .max(ctx5.inner_marginal(-XI_STRIP_FLOOR, BetaRange::FullNeg));
    let log_sliver = (4.0 * XI_STRIP_FLOOR).ln() + edge;
    errs.push(log_sliver);

    // Consolidate per-context bookkeeping (outer convergence flags,
    // structural trouble, inner failure densities, evaluation counts).
    let outer_ok = box_res.converged
        && c3_res.converged
        && c4_res.converged
        && c2_main.converged
        && c2_tail.converged
        && c5_res.converged
        && ball.converged;
    let mut fail_density = ball.fail_term;
    for ctx in [&ctx_box, &ctx3, &ctx4, &ctx2, &ctx5] {
        evals += ctx.evals.get();
        trouble |= ctx.trouble.get();
        fail_density = fail_density.max(ctx.inner_fail_term(c2_xi_max));
    }
    errs.push(fail_density);

    // Ball-in-box verification via exact corner extremes: β = μ − τ/ξ is
    // monotone in each coordinate (increasing in μ and ξ, decreasing in
    // τ for ξ > 0), so its minimum over the coordinate box enclosing the
    // ball is attained at (τ̂+r, μ̂−r, ξ̂−r). The other faces are plain
    // coordinate bounds. Reported as a diagnostic; when false, the
    // box-minus-ball identity leaks by the (un-estimated) mass of the
    // protruding cap.
    let th = fit.theta;
    let xi_min_ball = th.xi - radii.r;
    let tau_max_ball = th.tau + radii.r;
    let ball_inside_box = xi_min_ball > 0.0
        && th.xi + radii.r < radii.xi_hi
        && tau_max_ball.ln() < radii.log_tau_hi
        && (th.mu - radii.r) - tau_max_ball / xi_min_ball > radii.beta_cut;

    // Box minus ball. Once the ball holds essentially all of the box's
    // mass the true difference sits far below quadrature noise, so a
    // small negative difference is the expected outcome, floored at −∞
    // (its share of the error budget is already carried by the box and
    // ball error terms). Only a deficit exceeding those combined bounds
    // signals a genuine inconsistency between the two integrals.
    let log_c1 = if box_res.log_value >= ball.log_value {
        log_sub_exp(box_res.log_value, ball.log_value)
    } else {
        let deficit = log_sub_exp(ball.log_value, box_res.log_value);
        let noise = log_add_exp(box_res.log_abs_err, ball.log_abs_err);
        if deficit > noise + 2f64.ln() {
            trouble = true;
            if std::env::var_os("GEVLAB_QUAD_DEBUG").is_some() {
                eprintln!(
                    "box-ball deficit: box {} ball {} deficit {deficit} noise {noise}",
                    box_res.log_value, ball.log_value
                );
            }
        }
        f64::NEG_INFINITY
    };

    if std::env::var_os("GEVLAB_QUAD_DEBUG").is_some() {
        eprintln!(
            "region convergence: box {} c3 {} c4 {} c2 {}/{} c5 {} ball {} trouble {trouble} \
             fail {fail_density}",
            box_res.converged,
            c3_res.converged,
            c4_res.converged,
            c2_main.converged,
            c2_tail.converged,
            c5_res.converged,
            ball.converged,
        );
    }

    let log_mass = [
        log_c1,
        log_c2,
        c3_res.log_value,
        c4_res.log_value,
        c5_res.log_value,
    ];
    let log_total = log_sum_exp(&[
        log_c1,
        log_c2,
        c3_res.log_value,
        c4_res.log_value,
        c5_res.log_value,
        ball.log_value,
    ]);
    errs.push(log_total + (3.0 * inner_tol).ln());
    Ok(RegionMasses {
        log_mass,
        log_ball: ball.log_value,
        log_total,
        abs_err_log: log_sum_exp(&errs),
        log_sliver_bound: log_sliver,
        converged: outer_ok && !trouble && fail_density <= log_total + tol.ln(),
        ball_inside_box,
        evals,
    })
}

/// Ball-mass integral diagnostics.
struct BallMass {
    log_value: f64,
    log_abs_err: f64,
    converged: bool,
    /// Error bound from budget-exhausted inner (radial/azimuth) calls,
    /// in final (unshifted) units; −∞ when all converged.
    fail_term: f64,
    evals: u64,
}

/// Mass of prior × likelihood over the Euclidean ball B_r(θ̂) in
/// (τ, μ, ξ), by nested spherical cubature in information-standardized
/// coordinates: with −∇²L(θ̂) = V Λ Vᵀ, the map θ = θ̂ + V Λ^{−1/2} x
/// makes the Gaussian factor isotropic (radial mass ∝ ρ² e^{−ρ²/2}), so
/// angular integrands are nearly constant and the ball becomes the
/// ellipsoid Σ x_j²/λ_j ≤ r² — a direction-dependent radial cutoff.
fn ball_mass_log(
    sample: &Sample,
    prior: &PriorSpec,
    theta_hat: &GevParams,
    r: f64,
    tol: f64,
) -> Result<BallMass> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!(
            "ball radius must be positive and finite, got {r}"
        )));
    }
    let info = observed_info(theta_hat, sample)?;
    let eig = info.as_matrix().symmetric_eigen();
    let lam = eig.eigenvalues;
    let v = eig.eigenvectors;
    let shift = log_likelihood(theta_hat, sample) + prior.log_density(theta_hat);
    if !shift.is_finite() {
        return Err(Error::Domain(
            "prior × likelihood is degenerate at the fitted maximum".into(),
        ));
    }
    let log_jac = -0.5 * (lam[0].ln() + lam[1].ln() + lam[2].ln());
    let evals = Cell::new(0u64);
    let trouble = Cell::new(false);
    let fail_density = Cell::new(f64::NEG_INFINITY);
    let note = |r: &LogQuadResult| {
        if !r.converged {
            fail_density.set(fail_density.get().max(r.log_abs_err));
        }
        r.log_value
    };
    let inner_tol = tol * 0.05;

    let radial = |dir: [f64; 3]| -> f64 {
        // Ellipsoid cutoff along this direction.
        let s = (dir[0] * dir[0] / lam[0] + dir[1] * dir[1] / lam[1] + dir[2] * dir[2] / lam[2])
            .sqrt();
        let rho_max = r / s;
        let res = run_quad(
            |rho| {
                evals.set(evals.get() + 1);
                let mut th = [theta_hat.tau, theta_hat.mu, theta_hat.xi];
                for j in 0..3 {
                    let step = rho * dir[j] / lam[j].sqrt();
                    th[0] += v[(0, j)] * step;
                    th[1] += v[(1, j)] * step;
                    th[2] += v[(2, j)] * step;
                }
                let theta = GevParams {
                    tau: th[0],
                    mu: th[1],
                    xi: th[2],
                };
                if !(theta.tau > 0.0 && theta.xi > XI_LOWER) {
                    return f64::NEG_INFINITY;
                }
                let lp = prior.log_density(&theta);
                if lp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                // Relative to the peak so panel maxima sit near 0.
                2.0 * rho.ln() + log_likelihood(&theta, sample) + lp - shift
            },
            0.0,
            rho_max,
            &[1.0, 2.0f64.sqrt(), 2.5, 0.9 * rho_max],
            inner_tol,
            MAX_PANELS_INNER,
            &trouble,
        );
        note(&res)
    };

    // Solid angle parametrized as (cos φ, α): dΩ = d cos φ dα.
    let polar = |c: f64| -> f64 {
        let sc = (1.0 - c * c).max(0.0).sqrt();
        let res = run_quad(
            |alpha: f64| radial([sc * alpha.cos(), sc * alpha.sin(), c]),
            0.0,
            2.0 * PI,
            &[0.5 * PI, PI, 1.5 * PI],
            tol * 0.2,
            MAX_PANELS_TAIL,
            &trouble,
        );
        note(&res)
    };

    let outer = run_quad(polar, -1.0, 1.0, &[0.0], tol, MAX_PANELS_TAIL, &trouble);
    let log_value = outer.log_value + log_jac + shift;
    // Budget-exhausted radial/azimuth calls, bounded over the 4π solid
    // angle and converted back to unshifted units.
    let fail_term = fail_density.get() + (4.0 * PI * FAIL_WIDTH_FACTOR).ln() + log_jac + shift;
    Ok(BallMass {
        log_value,
        log_abs_err: log_sum_exp(&[
            outer.log_abs_err + log_jac + shift,
            fail_term,
            log_value + (5.0 * inner_tol).ln(),
        ]),
        converged: outer.converged && !trouble.get() && fail_term <= log_value + tol.ln(),
        fail_term,
        evals: evals.get(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{bn_rate_limit_log, laplace_fit};

    fn sim(xi: f64, n: usize, seed: u64) -> Sample {
        let th = GevParams::new(1.0, 0.0, xi).unwrap();
        Sample::simulate(th, n, seed).unwrap()
    }

    fn toy_sample() -> Sample {
        Sample::new(vec![0.3, 1.2, 2.7]).unwrap()
    }

    #[test]
    fn reduced_integrand_reference_values() {
        // Frozen from a 25-digit evaluation of the closed reduction.
        let s = toy_sample();
        let pr = PriorSpec::reference();
        let cases = [
            (-0.5, 0.4, -4.799_653_206_779_136_5),
            (0.1, 0.8, -4.082_357_378_900_522_9),
            (3.5, -0.3, -5.277_090_737_576_437_0),
        ];
        for &(beta, xi, expect) in &cases {
            let got = reduced_integrand_log(beta, xi, &s, &pr).unwrap();
            assert!(
                (got - expect).abs() < 1e-13,
                "(β={beta}, ξ={xi}): {got} vs {expect}"
            );
        }
        // Outside the branch or structurally invalid: errors.
        assert!(reduced_integrand_log(0.5, 0.4, &s, &pr).is_err()); // β ≥ Y_(1)
        assert!(reduced_integrand_log(1.0, -0.3, &s, &pr).is_err()); // β ≤ Y_(n)
        assert!(reduced_integrand_log(-0.5, 0.0, &s, &pr).is_err()); // ξ = 0
        let proper = PriorSpec::ProperIndep {
            log_tau_mean: 0.0,
            log_tau_sd: 1.0,
            mu_mean: 0.0,
            mu_sd: 1.0,
            xi_mean: 0.0,
            xi_sd: 1.0,
        };
        assert!(reduced_integrand_log(-0.5, 0.4, &s, &proper).is_err());
    }

    #[test]
    fn reduced_integrand_stable_through_tiny_shapes() {
        // At |ξ| = 1e−10 the log-sum-exp term is 1 + O(e^{−10^9}) — zero
        // to f64 — so the integrand must match the analytic small-ξ form
        //   log Γ(n) + (1−n)·log|ξ| − n·log b₁ − (1+1/ξ)·Σ log(v_i/v₁)
        // to near machine relative accuracy. A non-pivoted evaluation is
        // orders of magnitude off here (pure cancellation noise in d/ξ).
        let s = toy_sample();
        let pr = PriorSpec::reference();
        let n = 3.0;
        for &(beta, xi) in &[(-2.0, 1e-10), (6.0, -1e-10)] {
            let got = reduced_integrand_log(beta, xi, &s, &pr).unwrap();
            let b1 = (s.values()[0] - beta) * xi.signum();
            let sum_d: f64 = s
                .values()
                .iter()
                .map(|y| ((y - beta) / (s.values()[0] - beta)).ln())
                .sum();
            let expect = log_gamma(n) + (1.0 - n) * xi.abs().ln()
                - n * b1.ln()
                - (1.0 + 1.0 / xi) * sum_d;
            let rel = (got - expect).abs() / expect.abs();
            assert!(rel < 1e-12, "(β={beta}, ξ={xi}): {got} vs {expect}");
        }

        // The β-marginal, unlike the pointwise integrand, is continuous
        // through ξ = 0 — this is what the sliver bound relies on.
        let big = Sample::simulate(GevParams::new(1.0, 0.0, 0.0).unwrap(), 40, 11).unwrap();
        let ctx = Ctx2d::new(
            &big,
            ShapeWeight::Constant,
            GevParams::new(1.0, 0.0, 0.05).unwrap(),
            1e-8,
        );
        let m6 = ctx.inner_marginal(1e-6, BetaRange::FullPos);
        let m8 = ctx.inner_marginal(1e-8, BetaRange::FullPos);
        let m10 = ctx.inner_marginal(1e-10, BetaRange::FullPos);
        assert!((m6 - m8).abs() < 1e-3, "{m6} vs {m8}");
        assert!((m8 - m10).abs() < 1e-4, "{m8} vs {m10}");
        let n6 = ctx.inner_marginal(-1e-6, BetaRange::FullNeg);
        let n10 = ctx.inner_marginal(-1e-10, BetaRange::FullNeg);
        assert!((n6 - n10).abs() < 1e-3, "{n6} vs {n10}");
        // Left and right limits agree: the two branch parametrizations
        // meet at the same Gumbel-line marginal.
        assert!((m10 - n10).abs() < 1e-4, "{m10} vs {n10}");
    }

    #[test]
    fn inner_marginal_reference_values() {
        // ∫ h dβ over (−∞, Y_(1)) frozen from 25-digit quadrature; the
        // ξ = 2.4 case has an integrable b₁^{−1/6} endpoint singularity
        // exercising the m-substitution section.
        let s = toy_sample();
        let ctx = Ctx2d::new(
            &s,
            ShapeWeight::Constant,
            GevParams::new(1.0, 1.0, 0.5).unwrap(),
            1e-10,
        );
        let got_smooth = ctx.inner_marginal(0.4, BetaRange::FullPos);
        assert!(
            (got_smooth - (-3.491_989_599_871_267_5)).abs() < 1e-8,
            "{got_smooth}"
        );
        let got_singular = ctx.inner_marginal(2.4, BetaRange::FullPos);
        assert!(
            (got_singular - (-4.174_801_487_124_315_6)).abs() < 1e-8,
            "{got_singular}"
        );
        assert!(!ctx.trouble.get());
    }

    #[test]
    fn inner_marginal_splits_are_consistent() {
        // (−∞, cut) + (cut, Y_(1)) under a lower-gamma factor with a huge
        // scale cut (factor ≡ 1) must reproduce the plain full marginal,
        // and lower + upper factors at a biting cut must recompose it.
        let s = sim(0.4, 60, 9);
        let th = GevParams::new(1.0, 0.0, 0.4).unwrap();
        let plain = Ctx2d::new(&s, ShapeWeight::Constant, th, 1e-9);
        let full = plain.inner_marginal(0.37, BetaRange::FullPos);
        let trunc =
            Ctx2d::new(&s, ShapeWeight::Constant, th, 1e-9).with_factor(TauFactor::Lower, 5000.0);
        let cut = s.min() - 1.3;
        let left = trunc.inner_marginal(0.37, BetaRange::UpTo(cut));
        let right = trunc.inner_marginal(0.37, BetaRange::Between(cut));
        let sum = log_add_exp(left, right);
        assert!(
            (sum - full).abs() < 1e-7,
            "split {sum} vs full {full} (parts {left}, {right})"
        );
        let low = Ctx2d::new(&s, ShapeWeight::Constant, th, 1e-9)
            .with_factor(TauFactor::Lower, 0.3)
            .inner_marginal(0.37, BetaRange::FullPos);
        let up = Ctx2d::new(&s, ShapeWeight::Constant, th, 1e-9)
            .with_factor(TauFactor::Upper, 0.3)
            .inner_marginal(0.37, BetaRange::FullPos);
        let recomposed = log_add_exp(low, up);
        assert!(
            (recomposed - full).abs() < 1e-7,
            "γ+Γ recomposition {recomposed} vs {full}"
        );
        assert!(low < full && up < full);
    }

    #[test]
    fn evidence_matches_laplace_at_moderate_n() {
        let s = sim(0.5, 400, 17);
        let pr = PriorSpec::reference();
        let ev = log_cn(&s, &pr, 1e-6).unwrap();
        assert!(ev.converged, "{ev:?}");
        assert_eq!(ev.method, EvidenceMethod::Reduced2d);
        let lap = laplace_fit(&s, &pr, None, None).unwrap();
        // The evidence dominates its Gaussian-approximation lower bound
        // and hugs it at this sample size.
        assert!(
            ev.log_cn >= lap.log_bn - 1e-4,
            "log C {} vs bound {}",
            ev.log_cn,
            lap.log_bn
        );
        assert!(
            (ev.log_cn - lap.log_bn).abs() < 0.05,
            "gap {}",
            ev.log_cn - lap.log_bn
        );
        // And the per-observation rate is near its limit.
        let rate = ev.log_cn / 400.0;
        let lim = bn_rate_limit_log(&GevParams::new(1.0, 0.0, 0.5).unwrap());
        assert!((rate - lim).abs() < 0.2, "rate {rate} vs {lim}");
    }

    #[test]
    fn evidence_is_scale_equivariant() {
        // y → a·y + b maps C_n to a^{1−n}·C_n for the 1/τ prior (a^{−n}
        // from the n densities, a^{+1} from the prior measure).
        let s = sim(0.3, 80, 23);
        let a = 2.0;
        let transformed = Sample::new(s.values().iter().map(|y| a * y + 3.0).collect()).unwrap();
        let pr = PriorSpec::reference();
        let e0 = log_cn(&s, &pr, 1e-7).unwrap();
        let e1 = log_cn(&transformed, &pr, 1e-7).unwrap();
        let expect = (1.0 - 80.0) * a.ln();
        let got = e1.log_cn - e0.log_cn;
        let slack = (3.0 * (e0.rel_err() + e1.rel_err())).max(1e-7);
        assert!(
            (got - expect).abs() < slack,
            "shift {got} vs {expect} (slack {slack})"
        );
    }

    #[test]
    fn evidence_handles_gumbel_truth() {
        // A true shape of 0 puts the fitted shape near the seam,
        // exercising both branches and the sliver bookkeeping.
        let s = sim(0.0, 300, 41);
        let ev = log_cn(&s, &PriorSpec::reference(), 1e-6).unwrap();
        assert!(ev.converged, "{ev:?}");
        assert!(ev.log_cn.is_finite());
        assert!(ev.log_sliver_bound < ev.log_cn - 15.0);
        // At Gumbel truth the evidence/Laplace ordering is not yet settled
        // at n = 300: the O(1/n) expansion correction can push B_n a few
        // thousandths ABOVE C_n (verified against importance sampling), so
        // only a two-sided sanity band is asserted here; the strict
        // lower-bound property is exercised away from the seam, where it
        // holds at practical n.
        let lap = laplace_fit(&s, &PriorSpec::reference(), None, None).unwrap();
        assert!(
            (ev.log_cn - lap.log_bn).abs() < 0.05,
            "log_cn {} and log_bn {} disagree beyond the Laplace-correction band",
            ev.log_cn,
            lap.log_bn,
        );
    }

    /// Estimate log C_n by importance sampling from the Laplace Gaussian
    /// N(θ̂, H⁻¹): an independent route sharing no quadrature machinery
    /// with the production path. Returns (estimate, standard error of the
    /// log estimate).
    fn importance_sampled_log_cn(
        s: &Sample,
        pr: &PriorSpec,
        draws: usize,
        seed: u64,
    ) -> (f64, f64) {
        use crate::likelihood::log_likelihood;
        use rand::{Rng, SeedableRng};

        let lap = laplace_fit(s, pr, None, None).unwrap();
        let th = lap.fit.theta;
        let r = lap.info.chol_lower;
        let log_det = lap.info.log_det;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut std_normal = move || {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let mut top = f64::NEG_INFINITY;
        let mut logw = Vec::with_capacity(draws);
        for _ in 0..draws {
            let z = [std_normal(), std_normal(), std_normal()];
            // Solve Rᵀx = z so that x ~ N(0, (RRᵀ)⁻¹) = N(0, H⁻¹).
            let x2 = z[2] / r[2][2];
            let x1 = (z[1] - r[2][1] * x2) / r[1][1];
            let x0 = (z[0] - r[1][0] * x1 - r[2][0] * x2) / r[0][0];
            let cand = GevParams {
                tau: th.tau + x0,
                mu: th.mu + x1,
                xi: th.xi + x2,
            };
            let lw = if cand.tau <= 0.0 || cand.xi <= -0.5 {
                f64::NEG_INFINITY
            } else {
                let log_q =
                    -1.5 * ln2pi + 0.5 * log_det - 0.5 * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]);
                pr.log_density(&cand) + log_likelihood(&cand, s) - log_q
            };
            top = top.max(lw);
            logw.push(lw);
        }
        let (mut s1, mut s2) = (KahanSum::new(), KahanSum::new());
        for lw in &logw {
            let e = (lw - top).exp();
            s1.add(e);
            s2.add(e * e);
        }
        let j = draws as f64;
        let mean = s1.value() / j;
        let var = (s2.value() / j - mean * mean).max(0.0);
        let se_log = (var / j).sqrt() / mean;
        (top + mean.ln(), se_log)
    }

    #[test]
    fn inner_marginal_matches_independent_parametrization() {
        // Near the Gumbel line the conditional β peak recedes to
        // μ̂ − τ̂/ξ and narrows to a relative width of 1/√n; re-deriving
        // the marginal on the log distance scale t = ln|β − pivot| (a
        // parametrization sharing nothing with the production map) guards
        // the seed placement that keeps that peak visible.
        let s = sim(0.0, 300, 41);
        let fit = seed_fit(&s);
        let ctx = Ctx2d::new(&s, ShapeWeight::Constant, fit.theta, 1e-9);
        for xi in [0.02, 0.005, 0.002, 1e-3, 1e-4, -0.005, -0.002, -1e-3] {
            let range = if xi > 0.0 {
                BetaRange::FullPos
            } else {
                BetaRange::FullNeg
            };
            let fast = ctx.inner_marginal_tol(xi, range, 1e-9);
            let y_anchor = if xi > 0.0 { s.min() } else { s.max() };
            let sign = if xi > 0.0 { -1.0 } else { 1.0 };
            let t_star = ((fit.theta.tau / xi.abs()).max(1e-8)).ln();
            let r = run_quad(
                |t| ctx.ln_h(xi, y_anchor + sign * t.exp()) + t,
                -600.0,
                600.0,
                &[t_star - 1.0, t_star, t_star + 1.0, 0.0],
                1e-10,
                2000,
                &ctx.trouble,
            );
            assert!(r.converged);
            assert!(
                (fast - r.log_value).abs() < 1e-7,
                "xi {xi}: map route {fast} vs log-distance route {}",
                r.log_value
            );
        }

        // Away from the seam the hazard inverts: the slice peak is much
        // *wider* than 1/√n (softmax flattening), so the bracket must use
        // the measured curvature or the flanks hide in the outer panels.
        let s = sim(1.0, 1000, 77);
        let fit = seed_fit(&s);
        let ctx = Ctx2d::new(&s, ShapeWeight::Constant, fit.theta, 1e-9);
        for xi in [0.85, 1.05, 1.35] {
            let fast = ctx.inner_marginal_tol(xi, BetaRange::FullPos, 1e-9);
            let t_star = ctx.b1_peak(xi).ln();
            let r = run_quad(
                |t| ctx.ln_h(xi, s.min() - t.exp()) + t,
                -600.0,
                600.0,
                &[t_star - 1.0, t_star, t_star + 1.0, 0.0],
                1e-10,
                2000,
                &ctx.trouble,
            );
            assert!(r.converged);
            // Both routes carry log values near −2200, so ~1e−6 of
            // accumulated roundoff is legitimate; a lost flank costs
            // ≥ 6e−3 and still trips this bound with huge margin.
            assert!(
                (fast - r.log_value).abs() < 1e-5,
                "xi {xi}: map route {fast} vs log-distance route {}",
                r.log_value
            );
        }
    }

    #[test]
    fn evidence_agrees_with_importance_sampling() {
        // Monte Carlo cross-validation of the quadrature route at a
        // near-Gumbel fit, where the seam bookkeeping is most delicate.
        let s = sim(0.0, 300, 41);
        let pr = PriorSpec::reference();
        let ev = log_cn(&s, &pr, 1e-6).unwrap();
        let (is_est, se) = importance_sampled_log_cn(&s, &pr, 200_000, 9001);
        assert!(se < 0.01, "importance sampler degenerated: se {se}");
        let gap = (ev.log_cn - is_est).abs();
        let slack = 6.0 * se + 3.0 * ev.rel_err();
        assert!(gap < slack, "quadrature {} vs IS {} ± {se}", ev.log_cn, is_est);
    }

    #[test]
    fn error_estimates_are_honest() {
        // Tightening the tolerance moves the value by less than the
        // coarse run's error estimate (plus a tiny absolute floor for
        // the regime where both runs are exact to machine precision).
        let pr = PriorSpec::reference();
        for seed in 0..20u64 {
            let xi = -0.2 + (0.05 * seed as f64) % 0.9;
            let s = sim(xi, 25, 100 + seed);
            let coarse = log_cn(&s, &pr, 2e-4).unwrap();
            let fine = log_cn(&s, &pr, 1e-4).unwrap();
            let shift = (coarse.log_cn - fine.log_cn).abs();
            let budget = coarse.rel_err() + 1e-9;
            assert!(
                shift <= budget,
                "seed {seed} (ξ₀={xi}): shift {shift} exceeds error budget {budget}"
            );
        }
    }

    #[test]
    fn reduced_and_full3d_agree_at_small_n() {
        let s = sim(0.35, 16, 7);
        let pr = PriorSpec::reference();
        let red = log_cn(&s, &pr, 1e-6).unwrap();
        let full = log_cn_full3d(&s, &pr, 1e-4).unwrap();
        assert_eq!(red.method, EvidenceMethod::Reduced2d);
        assert_eq!(full.method, EvidenceMethod::Full3d);
        let rel = (red.log_cn - full.log_cn).abs() / red.log_cn.abs().max(1.0);
        assert!(
            rel < 1e-3,
            "2D {} vs 3D {} (rel {rel})",
            red.log_cn,
            full.log_cn
        );
    }

    #[test]
    fn proper_prior_dispatches_to_3d_and_is_finite() {
        let s = sim(0.2, 14, 3);
        let pr = PriorSpec::ProperIndep {
            log_tau_mean: 0.0,
            log_tau_sd: 0.6,
            mu_mean: 0.0,
            mu_sd: 2.0,
            xi_mean: 0.1,
            xi_sd: 0.4,
        };
        let ev = log_cn(&s, &pr, 1e-4).unwrap();
        assert_eq!(ev.method, EvidenceMethod::Full3d);
        assert!(ev.log_cn.is_finite());
        assert!(ev.converged, "{ev:?}");
        // A proper prior integrates to 1, so C_n is a genuine marginal
        // likelihood and must sit below the likelihood maximum.
        let fit = local_mle(&s, None, None).unwrap();
        assert!(ev.log_cn < fit.log_lik);
    }

    #[test]
    fn single_observation_predictive_probe() {
        // With one observation and the 1/τ prior the reduced integrand
        // collapses to 1/(y−β), independent of ξ, so a bounded (β, ξ)
        // probe box has a closed-form mass. Check the reduced form and
        // the direct (τ, μ, ξ) triple integral against it — a sharp
        // end-to-end test of the scale reduction itself.
        let y = 1.7;
        let s = Sample::new(vec![y]).unwrap();
        let (xi_lo, xi_hi) = (0.25, 1.1);
        let (b_lo, b_hi) = (-2.0, y - 0.2);
        let closed = ((xi_hi - xi_lo) * ((y - b_lo) / (y - b_hi)).ln()).ln();
        let pr = PriorSpec::reference();
        let red = integrate_log(
            |xi| {
                integrate_log(
                    |beta| reduced_integrand_log(beta, xi, &s, &pr).unwrap(),
                    b_lo,
                    b_hi,
                    &[0.0],
                    1e-9,
                    200,
                )
                .unwrap()
                .log_value
            },
            xi_lo,
            xi_hi,
            &[0.5],
            1e-8,
            100,
        )
        .unwrap();
        assert!(
            (red.log_value - closed).abs() < 1e-7,
            "{} vs {closed}",
            red.log_value
        );
        // Direct triple integral over the same region; μ = β + τ/ξ.
        let triple = integrate_log(
            |xi| {
                integrate_log(
                    |t: f64| {
                        let tau = t.exp();
                        integrate_log(
                            |beta| {
                                let theta = GevParams {
                                    tau,
                                    mu: beta + tau / xi,
                                    xi,
                                };
                                log_likelihood(&theta, &s) - tau.ln() + t
                            },
                            b_lo,
                            b_hi,
                            &[0.0],
                            1e-8,
                            200,
                        )
                        .unwrap()
                        .log_value
                    },
                    -14.0,
                    8.0,
                    &[0.0],
                    1e-7,
                    250,
                )
                .unwrap()
                .log_value
            },
            xi_lo,
            xi_hi,
            &[0.5],
            1e-6,
            100,
        )
        .unwrap();
        let rel = (triple.log_value - closed).abs() / closed.abs().max(1.0);
        assert!(rel < 1e-3, "3D {} vs closed {closed}", triple.log_value);
    }

    #[test]
    fn radii_reference_values_and_guards() {
        let th1 = GevParams::new(1.0, 0.0, 1.0).unwrap();
        let rr = region_radii(&th1).unwrap();
        let (t1, _) = radii_thresholds(&th1, 0.0);
        assert!((t1 - 3.884_068_484_341_587_6).abs() < 1e-14);
        // Minimal radius without margin; the returned one has the margin.
        let r1_min = t1.exp_m1() * th1.xi;
        assert!((r1_min - 47.621_629_548_661_909).abs() < 1e-11);
        assert!((rr.r1 - 49.547_281_682_062_508).abs() < 1e-10);
        assert_eq!(rr.r2, 1.01);
        let (_, t3) = radii_thresholds(&th1, rr.r1);
        assert!((t3 - 153.832_280_740_447_91).abs() < 1e-10);
        assert!((rr.log1p_r3_over_tau0 - 1.01 * t3).abs() < 1e-10);
        assert!(rr.r3.is_finite()); // ≈ 3.0e67: still representable here
        assert!(rr.satisfied_at(&th1));

        // Moderate ξ₀: r3 overflows but the log form stays exact.
        let th05 = GevParams::new(1.0, 0.0, 0.5).unwrap();
        let rr05 = region_radii(&th05).unwrap();
        assert!((rr05.r1 - 1_435.708_578_374_744_5).abs() < 1e-9);
        assert!((rr05.log1p_r3_over_tau0 - 9_103.960_104_835_011_1).abs() < 1e-8);
        assert!(rr05.r3.is_infinite());
        assert!(rr05.satisfied_at(&th05));
        assert!((rr05.beta_cut - (-2.0 - 1.01)).abs() < 1e-12);

        // Non-positive shape: refused.
        assert!(region_radii(&GevParams::new(1.0, 0.0, 0.0).unwrap()).is_err());
        assert!(region_radii(&GevParams::new(1.0, 0.0, -0.2).unwrap()).is_err());
    }

    #[test]
    fn region_masses_add_up_and_ball_dominates() {
        // ξ₀ = 1 keeps the ball-in-box geometry comfortable (β varies as
        // τ/ξ², so flatter shapes push the ball through the β face).
        let th0 = GevParams::new(1.0, 0.0, 1.0).unwrap();
        let s = Sample::simulate(th0, 1000, 77).unwrap();
        let pr = PriorSpec::reference();
        let fit = local_mle(&s, None, None).unwrap();
        assert!(fit.converged && fit.theta.xi > 0.7, "{fit:?}");
        let rr = region_radii(&th0).unwrap();
        let rm = region_masses(&s, &pr, &rr, &fit, 1e-4).unwrap();
        assert!(rm.ball_inside_box, "{rm:?}");
        assert!(rm.converged, "{rm:?}");
        let ev = log_cn(&s, &pr, 1e-7).unwrap();
        // Additivity. The gap in log units is the relative discrepancy
        // of the masses; allow the combined error budgets.
        let gap = (rm.log_total - ev.log_cn).abs();
        let allow = (3.0 * ((rm.abs_err_log - rm.log_total).exp() + ev.rel_err())).max(1e-6);
        assert!(gap < allow, "additivity gap {gap} vs allowance {allow}");
        // Most of the posterior mass sits in the ball at n = 1000.
        let ball_frac = (rm.log_ball - ev.log_cn).exp();
        assert!(ball_frac > 0.9, "ball fraction {ball_frac}");
        // The scale-tail piece is doubly exponentially small with these
        // radii — thousands of log units below the total (or an exact
        // numerical zero).
        assert!(rm.log_mass[3] < ev.log_cn - 1000.0, "{rm:?}");
        // Every region is a strict subset of the total.
        for (k, lm) in rm.log_mass.iter().enumerate() {
            assert!(
                *lm < ev.log_cn,
                "region {} mass {} vs total {}",
                k + 1,
                lm,
                ev.log_cn
            );
        }
    }

    #[test]
    fn evidence_result_serializes() {
        let s = sim(0.4, 40, 5);
        let ev = log_cn(&s, &PriorSpec::reference(), 1e-5).unwrap();
        let json = serde_json::to_string(&ev).unwrap();
        let back: EvidenceResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.log_cn, ev.log_cn);
        assert_eq!(back.method, EvidenceMethod::Reduced2d);
        assert!(json.contains("reduced-2d"));
    }

    #[test]
    fn input_guards() {
        let s = sim(0.3, 10, 1);
        let pr = PriorSpec::reference();
        assert!(log_cn(&s, &pr, 0.0).is_err());
        assert!(log_cn(&s, &pr, 0.9).is_err());
        let tiny = Sample::new(vec![0.1, 0.9]).unwrap();
        assert!(log_cn(&tiny, &pr, 1e-5).is_err());
        let fit = local_mle(&s, None, None).unwrap();
        let rr = region_radii(&GevParams::new(1.0, 0.0, 0.5).unwrap()).unwrap();
        let proper = PriorSpec::ProperIndep {
            log_tau_mean: 0.0,
            log_tau_sd: 1.0,
            mu_mean: 0.0,
            mu_sd: 1.0,
            xi_mean: 0.0,
            xi_sd: 1.0,
        };
        assert!(region_masses(&s, &proper, &rr, &fit, 1e-5).is_err());
        let mut neg_fit = fit.clone();
        neg_fit.theta.xi = -0.1;
        assert!(region_masses(&s, &pr, &rr, &neg_fit, 1e-5).is_err());
    }
}
