//! GEV log likelihood with closed-form score and Hessian, plus the family
//! of weighted power sums that links finite-sample derivatives to their
//! large-sample limits.
//!
//! With per-observation blocks `q, u, d1, d2` from [`crate::gev`] and the
//! shorthand `G = u − 1 − ξ`, the log likelihood
//! `ℓ = −log τ − (1+ξ) q − u` has exact derivatives
//!
//! ```text
//! ℓ_τ = −1/τ + q_τ G            ℓ_ττ = 1/τ² + q_ττ G − u q_τ²
//! ℓ_μ = q_μ G                   ℓ_τμ = q_τμ G − u q_τ q_μ
//! ℓ_ξ = −q − d1 G               ℓ_μμ = q_μμ G − u q_μ²
//!                               ℓ_τξ = q_τξ G + q_τ (u d1 − 1)
//!                               ℓ_μξ = q_μξ G + q_μ (u d1 − 1)
//!                               ℓ_ξξ = 2 d1 − d2 G − u d1²
//! ```
//!
//! where the `q` partials are rational in `z` and `w = 1 + ξz` only:
//! `q_τ = −z/(τw)`, `q_μ = −1/(τw)`, `q_ττ = z(w+1)/(τ²w²)`,
//! `q_τμ = 1/(τ²w²)`, `q_μμ = −ξ/(τ²w²)`, `q_τξ = z²/(τw²)`,
//! `q_μξ = z/(τw²)`. No expression divides by ξ, so score and Hessian are
//! uniformly accurate through the Gumbel line.
//!
//! The sum statistics `S_{k,a,b} = Σ_i w_i^{−k−a/ξ} logᵇ w_i` are evaluated
//! as `Σ exp(−(kξ+a) q_i) (ξ q_i)ᵇ`, again with no shape branch, and their
//! per-observation means converge to `(−ξ₀)ᵇ Γ⁽ᵇ⁾(kξ₀ + a + 1)` under
//! sampling at θ₀ (for `kξ₀ + a + 1 > 0`). An independent expansion of the
//! Hessian in this sum basis ([`hessian_from_sums`]) provides a dual
//! evaluation route used to cross-validate the closed forms.

use crate::gev::{obs_blocks, GevParams, Sample};
use crate::numeric::KahanSum;
use crate::specfun;
use crate::{Error, Result};

/// Log likelihood `L_n(θ) = Σ_i log f(y_i; θ)`; `-inf` when any
/// observation falls outside the support at θ.
pub fn log_likelihood(theta: &GevParams, sample: &Sample) -> f64 {
    let mut acc = KahanSum::new();
    let log_tau = theta.tau.ln();
    for &y in sample.values() {
        let z = theta.standardize(y);
        match obs_blocks(theta.xi, z) {
            Some(b) => {
                let term = -log_tau - (1.0 + theta.xi) * b.q - b.u;
                // u = w^{−1/ξ} overflows at extreme (τ, μ): the density
                // is a genuine zero there, not an error.
                if term == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                acc.add(term);
            }
            None => return f64::NEG_INFINITY,
        }
    }
    acc.value()
}

/// Score ∇L_n(θ) in `(τ, μ, ξ)` order. Errors when θ excludes part of the
/// sample from the support (the derivative does not exist there).
pub fn score(theta: &GevParams, sample: &Sample) -> Result<[f64; 3]> {
    let tau = theta.tau;
    let xi = theta.xi;
    let mut s_tau = KahanSum::new();
    let mut s_mu = KahanSum::new();
    let mut s_xi = KahanSum::new();
    for &y in sample.values() {
        let z = theta.standardize(y);
        let Some(b) = obs_blocks(xi, z) else {
            return Err(Error::SupportViolation(format!(
                "observation {y} outside support at τ={tau}, μ={}, ξ={xi}",
                theta.mu
            )));
        };
        let g = b.u - 1.0 - xi;
        let q_tau = -b.z / (tau * b.w);
        let q_mu = -1.0 / (tau * b.w);
        s_tau.add(-1.0 / tau + q_tau * g);
        s_mu.add(q_mu * g);
        s_xi.add(-b.q - b.d1 * g);
    }
    Ok([s_tau.value(), s_mu.value(), s_xi.value()])
}

/// Hessian ∇²L_n(θ), symmetric 3×3 in `(τ, μ, ξ)` order; same domain
/// contract as [`score`].
pub fn hessian(theta: &GevParams, sample: &Sample) -> Result<[[f64; 3]; 3]> {
    let tau = theta.tau;
    let xi = theta.xi;
    let tau2 = tau * tau;
    let mut h = [[KahanSum::new(); 3]; 3];
    for &y in sample.values() {
        let z = theta.standardize(y);
        let Some(b) = obs_blocks(xi, z) else {
            return Err(Error::SupportViolation(format!(
                "observation {y} outside support at τ={tau}, μ={}, ξ={xi}",
                theta.mu
            )));
        };
        let g = b.u - 1.0 - xi;
        let w = b.w;
        let w2 = w * w;
        let q_tau = -b.z / (tau * w);
        let q_mu = -1.0 / (tau * w);
        let q_tt = b.z * (w + 1.0) / (tau2 * w2);
        let q_tm = 1.0 / (tau2 * w2);
        let q_mm = -xi / (tau2 * w2);
        let q_tx = b.z * b.z / (tau * w2);
        let q_mx = b.z / (tau * w2);
        let ud1m1 = b.u * b.d1 - 1.0;
        h[0][0].add(1.0 / tau2 + q_tt * g - b.u * q_tau * q_tau);
        h[0][1].add(q_tm * g - b.u * q_tau * q_mu);
        h[1][1].add(q_mm * g - b.u * q_mu * q_mu);
        h[0][2].add(q_tx * g + q_tau * ud1m1);
        h[1][2].add(q_mx * g + q_mu * ud1m1);
        h[2][2].add(2.0 * b.d1 - b.d2 * g - b.u * b.d1 * b.d1);
    }
    let v = |i: usize, j: usize| h[i][j].value();
    Ok([
        [v(0, 0), v(0, 1), v(0, 2)],
        [v(0, 1), v(1, 1), v(1, 2)],
        [v(0, 2), v(1, 2), v(2, 2)],
    ])
}

/// Index of a weighted power sum `S_{k,a,b} = Σ_i w_i^{−k−a/ξ} logᵇ w_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SumStatIndex {
    /// Integer power of w⁻¹ (0..=2).
    pub k: u8,
    /// Coefficient of the 1/ξ power (0..=1).
    pub a: u8,
    /// Power of log w (0..=2).
    pub b: u8,
}

impl SumStatIndex {
    /// Validated constructor for the supported index ranges.
    pub fn new(k: u8, a: u8, b: u8) -> Result<Self> {
        if k > 2 || a > 1 || b > 2 {
            return Err(Error::Domain(format!(
                "sum statistic index out of range: (k,a,b)=({k},{a},{b}), need k≤2, a≤1, b≤2"
            )));
        }
        Ok(SumStatIndex { k, a, b })
    }
}

/// Evaluate `S_{k,a,b}(θ)` over the sample via the shape-stable form
/// `Σ exp(−(kξ+a) q_i) · (ξ q_i)ᵇ`, with compensated accumulation.
pub fn sum_stat(idx: SumStatIndex, theta: &GevParams, sample: &Sample) -> Result<f64> {
    let xi = theta.xi;
    let exponent_coef = idx.k as f64 * xi + idx.a as f64;
    let mut acc = KahanSum::new();
    for &y in sample.values() {
        let z = theta.standardize(y);
        let Some(blk) = obs_blocks(xi, z) else {
            return Err(Error::SupportViolation(format!(
                "observation {y} outside support in sum statistic at ξ={xi}"
            )));
        };
        let log_w_pow = match idx.b {
            0 => 1.0,
            1 => xi * blk.q,
            _ => (xi * blk.q) * (xi * blk.q),
        };
        acc.add((-exponent_coef * blk.q).exp() * log_w_pow);
    }
    Ok(acc.value())
}

/// Almost-sure limit of `(1/n) S_{k,a,b}` under i.i.d. sampling at θ₀:
/// `(−ξ₀)ᵇ Γ⁽ᵇ⁾(kξ₀ + a + 1)`, defined for `kξ₀ + a + 1 > 0`
/// (equivalently `w^{−k−a/ξ}` integrable at the support edge).
pub fn sum_stat_limit(idx: SumStatIndex, theta0: &GevParams) -> Result<f64> {
    let xi0 = theta0.xi;
    let arg = idx.k as f64 * xi0 + idx.a as f64 + 1.0;
    if !(arg > 0.0) {
        return Err(Error::Domain(format!(
            "sum statistic limit needs kξ₀+a+1 > 0, got {arg} for (k,a,b)=({},{},{}) at ξ₀={xi0}",
            idx.k, idx.a, idx.b
        )));
    }
    let sign_pow = (-xi0).powi(idx.b as i32);
    Ok(sign_pow * specfun::gamma_deriv(idx.b, arg)?)
}

/// Smallest |ξ| for which the sum-basis Hessian expansion is evaluated;
/// its explicit 1/ξ⁴ coefficients lose all precision near the Gumbel line,
/// where the primary closed form (with no such powers) remains exact.
pub const SUM_BASIS_XI_MIN: f64 = 0.05;

/// Hessian assembled from the sum statistics `S_{k,a,b}` instead of
/// per-observation derivative blocks — an algebraically independent route
/// kept for cross-validation of [`hessian`]. Requires |ξ| ≥
/// [`SUM_BASIS_XI_MIN`]; see that constant for why.
pub fn hessian_from_sums(theta: &GevParams, sample: &Sample) -> Result<[[f64; 3]; 3]> {
    let n = sample.n() as f64;
    let means = |k: u8, a: u8, b: u8| -> Result<f64> {
        Ok(sum_stat(SumStatIndex::new(k, a, b)?, theta, sample)? / n)
    };
    hessian_sum_basis(theta.tau, theta.xi, n, means)
}

/// Per-unit-n Hessian in the sum basis: plugging in empirical means
/// `(1/n) S_{k,a,b}` reproduces the finite-sample Hessian exactly (an
/// algebraic identity), while plugging in their sampling limits yields the
/// large-sample Hessian expectation. `scale_n` multiplies the result.
pub(crate) fn hessian_sum_basis(
    tau: f64,
    xi: f64,
    scale_n: f64,
    m: impl Fn(u8, u8, u8) -> Result<f64>,
) -> Result<[[f64; 3]; 3]> {
    if xi.abs() < SUM_BASIS_XI_MIN {
        return Err(Error::Domain(format!(
            "sum-basis Hessian requires |ξ| ≥ {SUM_BASIS_XI_MIN}, got {xi}"
        )));
    }
    let n = scale_n;
    let c1 = 1.0 + 1.0 / xi;
    let tau2 = tau * tau;
    let (m200, m100) = (m(2, 0, 0)?, m(1, 0, 0)?);
    let (m010, m110, m210) = (m(0, 1, 0)?, m(1, 1, 0)?, m(2, 1, 0)?);
    let (m011, m111) = (m(0, 1, 1)?, m(1, 1, 1)?);
    let (m001, m012) = (m(0, 0, 1)?, m(0, 1, 2)?);

    let h_tt = (n / tau2)
        * (1.0 - c1 * (1.0 - m200) + (m010 - m210) / xi
            - (m010 - 2.0 * m110 + m210) / (xi * xi));
    let h_tm = (n / tau2)
        * (-xi * c1 * m200 + m210 - m110 / xi + m210 / xi);
    let h_mm = (n / tau2) * (xi * xi * c1 * m200 - (xi + 1.0) * m210);
    let h_tx = (n / tau)
        * ((c1 * (m100 - m200) - (m110 - m210) / xi) / xi
            - (1.0 - m100) / (xi * xi)
            + (m010 - m110) / (xi * xi)
            - (m011 - m111 - m010 + 2.0 * m110 - m210) / (xi * xi * xi));
    let h_mx = (n / tau)
        * (c1 * m200 - m210 / xi - m100 / xi + m110 / xi
            - (m111 - m110 + m210) / (xi * xi));
    let xi2 = xi * xi;
    let xi3 = xi2 * xi;
    let xi4 = xi2 * xi2;
    let h_xx = n
        * (((1.0 - m100) - 2.0 * m001 - (m010 - m110) + 2.0 * m011) / xi3
            - (m012 - (m011 - m111)) / xi4
            + (c1 * (1.0 - 2.0 * m100 + m200) - (m010 - 2.0 * m110 + m210) / xi) / xi2
            + (1.0 - m100) / xi3
            - (m010 - m110) / xi3
            + ((m011 - m111) - (m010 - 2.0 * m110 + m210)) / xi4);
    Ok([
        [h_tt, h_tm, h_tx],
        [h_tm, h_mm, h_mx],
        [h_tx, h_mx, h_xx],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed three-point sample used by all reference values below; the
    /// expected numbers were produced by 30-digit arithmetic on the exact
    /// likelihood expressions and rounded to f64.
    fn fixture() -> Sample {
        Sample::new(vec![0.3, 1.2, 2.7]).unwrap()
    }

    fn assert_close(actual: f64, expect: f64, tol: f64, label: &str) {
        let scale = expect.abs().max(1.0);
        assert!(
            (actual - expect).abs() <= tol * scale,
            "{label}: got {actual:.17e}, want {expect:.17e}"
        );
    }

    #[test]
    fn loglik_score_hessian_reference_positive_shape() {
        let s = fixture();
        let th = GevParams::new(1.1, 0.4, 0.3).unwrap();
        assert_close(log_likelihood(&th, &s), -4.943_066_606_656_154_3, 1e-15, "ll");
        let sc = score(&th, &s).unwrap();
        assert_close(sc[0], -1.032_043_386_082_820_4, 1e-14, "score τ");
        assert_close(sc[1], 1.389_784_305_419_594_9, 1e-14, "score μ");
        assert_close(sc[2], -0.786_467_330_452_620_28, 1e-14, "score ξ");
        let h = hessian(&th, &s).unwrap();
        assert_close(h[0][0], -0.511_668_486_198_125_04, 1e-13, "H ττ");
        assert_close(h[0][1], -1.208_855_884_372_059_1, 1e-13, "H τμ");
        assert_close(h[0][2], -0.600_551_904_736_762_31, 1e-13, "H τξ");
        assert_close(h[1][1], -1.020_593_418_852_027, 1e-13, "H μμ");
        assert_close(h[1][2], 0.910_281_064_406_634_74, 1e-13, "H μξ");
        assert_close(h[2][2], 0.051_638_975_416_334_146, 1e-12, "H ξξ");
    }

    #[test]
    fn loglik_score_hessian_reference_negative_shape() {
        let s = fixture();
        let th = GevParams::new(1.1, 0.4, -0.2).unwrap();
        assert_close(log_likelihood(&th, &s), -4.625_631_086_822_977_5, 1e-15, "ll");
        let sc = score(&th, &s).unwrap();
        assert_close(sc[0], -0.041_181_721_522_949_497, 1e-13, "score τ");
        assert_close(sc[1], 1.249_360_832_422_601_5, 1e-14, "score μ");
        assert_close(sc[2], -0.045_095_380_028_309_959, 1e-13, "score ξ");
        let h = hessian(&th, &s).unwrap();
        assert_close(h[0][0], -5.002_354_315_894_448_6, 1e-13, "H ττ");
        assert_close(h[0][1], -2.581_528_119_770_931_7, 1e-13, "H τμ");
        assert_close(h[0][2], -5.954_121_554_133_683, 1e-13, "H τξ");
        assert_close(h[1][1], -1.939_931_725_454_501_6, 1e-13, "H μμ");
        assert_close(h[1][2], -1.557_005_162_687_813_7, 1e-13, "H μξ");
        assert_close(h[2][2], -6.841_786_914_952_788_3, 1e-13, "H ξξ");
    }

    #[test]
    fn loglik_score_hessian_reference_near_gumbel() {
        // ξ = 1e-5 exercises the series branch on every observation.
        let s = fixture();
        let th = GevParams::new(0.8, 0.5, 1e-5).unwrap();
        assert_close(log_likelihood(&th, &s), -4.470_380_855_126_804_2, 1e-15, "ll");
        let sc = score(&th, &s).unwrap();
        assert_close(sc[0], 0.194_251_498_600_193_96, 1e-13, "score τ");
        assert_close(sc[1], 1.543_973_417_611_347_8, 1e-14, "score μ");
        assert_close(sc[2], 0.378_821_216_908_188_89, 1e-13, "score ξ");
        let h = hessian(&th, &s).unwrap();
        assert_close(h[0][0], -6.552_470_468_488_540_4, 1e-13, "H ττ");
        assert_close(h[0][1], -2.272_948_435_103_018_6, 1e-13, "H τμ");
        assert_close(h[0][2], -6.158_551_300_903_087_8, 1e-13, "H τξ");
        assert_close(h[1][1], -2.757_504_639_910_135_2, 1e-13, "H μμ");
        assert_close(h[1][2], -0.745_980_142_734_356_86, 1e-13, "H μξ");
        assert_close(h[2][2], -5.826_948_946_945_109_3, 1e-13, "H ξξ");
    }

    #[test]
    fn loglik_score_hessian_reference_exact_gumbel() {
        let s = fixture();
        let th = GevParams::new(0.9, 0.1, 0.0).unwrap();
        assert_close(log_likelihood(&th, &s), -5.168_202_015_864_612_7, 1e-15, "ll");
        let sc = score(&th, &s).unwrap();
        assert_close(sc[0], 0.705_137_546_608_801_18, 1e-14, "score τ");
        assert_close(sc[1], 2.054_499_744_994_713_1, 1e-14, "score μ");
        assert_close(sc[2], 0.139_149_440_290_049_59, 1e-13, "score ξ");
        let h = hessian(&th, &s).unwrap();
        assert_close(h[0][0], -6.436_013_488_318_475_5, 1e-13, "H ττ");
        assert_close(h[0][1], -3.145_381_866_519_326, 1e-13, "H τμ");
        assert_close(h[0][2], -6.172_944_841_732_386_4, 1e-13, "H τξ");
        assert_close(h[1][1], -1.420_926_209_265_133_6, 1e-13, "H μμ");
        assert_close(h[1][2], -1.229_539_403_076_647_3, 1e-13, "H μξ");
        assert_close(h[2][2], -7.283_715_473_186_236_2, 1e-13, "H ξξ");
    }

    #[test]
    fn gumbel_score_matches_closed_form() {
        // At ξ = 0 the score has the elementary Gumbel form; the generic
        // path must reproduce it exactly (not approximately).
        let s = fixture();
        let (tau, mu) = (0.9, 0.1);
        let th = GevParams::new(tau, mu, 0.0).unwrap();
        let sc = score(&th, &s).unwrap();
        let mut st = 0.0;
        let mut sm = 0.0;
        let mut sx = 0.0;
        for &y in s.values() {
            let z = (y - mu) / tau;
            let e = (-z).exp();
            st += (z - z * e - 1.0) / tau;
            sm += (1.0 - e) / tau;
            sx += -z - 0.5 * z * z * (e - 1.0);
        }
        assert_close(sc[0], st, 1e-14, "gumbel score τ");
        assert_close(sc[1], sm, 1e-14, "gumbel score μ");
        assert_close(sc[2], sx, 1e-14, "gumbel score ξ");
    }

    #[test]
    fn score_and_hessian_match_finite_differences() {
        // Central finite differences of the log likelihood (for the score)
        // and of the analytic score (for the Hessian), at an awkward point.
        let s = fixture();
        let th = GevParams::new(1.3, -0.2, 0.07).unwrap();
        let sc = score(&th, &s).unwrap();
        let h = hessian(&th, &s).unwrap();
        let eval = |t: [f64; 3]| {
            log_likelihood(&GevParams::new(t[0], t[1], t[2]).unwrap(), &s)
        };
        let base = th.as_array();
        for j in 0..3 {
            let hstep = 1e-6 * base[j].abs().max(1.0);
            let mut up = base;
            up[j] += hstep;
            let mut dn = base;
            dn[j] -= hstep;
            let fd = (eval(up) - eval(dn)) / (2.0 * hstep);
            assert_close(sc[j], fd, 2e-9, &format!("fd score {j}"));
            let sup = score(&GevParams::new(up[0], up[1], up[2]).unwrap(), &s).unwrap();
            let sdn = score(&GevParams::new(dn[0], dn[1], dn[2]).unwrap(), &s).unwrap();
            for i in 0..3 {
                let fdh = (sup[i] - sdn[i]) / (2.0 * hstep);
                assert_close(h[i][j], fdh, 5e-8, &format!("fd hessian {i}{j}"));
            }
        }
    }

    #[test]
    fn support_violations_reported() {
        let s = fixture();
        // ξ > 0 with lower endpoint above min(y).
        let th = GevParams::new(0.5, 1.0, 0.8).unwrap();
        assert_eq!(log_likelihood(&th, &s), f64::NEG_INFINITY);
        assert!(score(&th, &s).is_err());
        assert!(hessian(&th, &s).is_err());
        assert!(sum_stat(SumStatIndex::new(1, 0, 0).unwrap(), &th, &s).is_err());
    }

    #[test]
    fn sum_stat_reference_values() {
        let s = fixture();
        let th = GevParams::new(1.1, 0.4, 0.3).unwrap();
        let cases = [
            ((0u8, 1u8, 0u8), 1.811_811_581_445_776_4),
            ((1, 0, 0), 2.463_458_045_230_434_3),
            ((1, 1, 1), 0.111_779_263_933_073_4),
            ((0, 1, 2), 0.067_789_031_876_307_13),
            ((2, 1, 0), 1.582_448_391_543_260_2),
            ((2, 0, 1), 0.287_646_202_842_134_5),
        ];
        for ((k, a, b), expect) in cases {
            let idx = SumStatIndex::new(k, a, b).unwrap();
            let v = sum_stat(idx, &th, &s).unwrap();
            assert_close(v, expect, 1e-14, &format!("S_{k}{a}{b}"));
        }
        assert!(SumStatIndex::new(3, 0, 0).is_err());
    }

    #[test]
    fn sum_stat_limits_reference_values() {
        // (−ξ₀)ᵇ Γ⁽ᵇ⁾(kξ₀+a+1) at the index/shape pairs exercised by the
        // long-run averaging checks.
        let th05 = GevParams::new(1.0, 0.0, 0.5).unwrap();
        let th02 = GevParams::new(1.0, 0.0, 0.2).unwrap();
        let l = |k, a, b, th: &GevParams| {
            sum_stat_limit(SumStatIndex::new(k, a, b).unwrap(), th).unwrap()
        };
        assert_close(l(1, 0, 0, &th05), specfun::gamma_deriv(0, 1.5).unwrap(), 1e-15, "λ100");
        assert_close(l(0, 1, 1, &th05), -0.211_392_167_549_233_57, 1e-14, "λ011");
        assert_close(l(2, 1, 0, &th02), 1.242_169_344_504_305_4, 1e-14, "λ210");
        assert_close(l(1, 1, 2, &th05), 0.327_279_288_990_668_38, 1e-14, "λ112");
        // With ξ₀ > −1/2 and k ≤ 2, a ≥ 0 the argument kξ₀+a+1 is always
        // positive, so the divergence guard in sum_stat_limit is purely
        // defensive; every valid parameter point has a finite limit.
        let thneg = GevParams::new(1.0, 0.0, -0.49).unwrap();
        assert!(sum_stat_limit(SumStatIndex::new(2, 0, 0).unwrap(), &thneg).is_ok());
        // Gumbel limit: logᵇ w factors vanish for b ≥ 1.
        let th0 = GevParams::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(l(1, 1, 1, &th0), 0.0);
        assert_close(l(0, 1, 0, &th0), 1.0, 1e-15, "λ010 gumbel");
    }

    #[test]
    fn sum_basis_hessian_agrees_with_direct() {
        // Dual-route check: the S-expansion must reproduce the
        // per-observation Hessian to near machine precision away from the
        // Gumbel line.
        let s = fixture();
        for &(tau, mu, xi) in &[(1.1, 0.4, 0.3), (1.1, 0.4, -0.2), (0.8, 0.5, 0.45)] {
            let th = GevParams::new(tau, mu, xi).unwrap();
            let h = hessian(&th, &s).unwrap();
            let hs = hessian_from_sums(&th, &s).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let scale = h[i][j].abs().max(1.0);
                    assert!(
                        (h[i][j] - hs[i][j]).abs() < 1e-11 * scale,
                        "entry ({i},{j}) at ξ={xi}: direct {} vs sums {}",
                        h[i][j],
                        hs[i][j]
                    );
                }
            }
        }
        // Guarded near zero.
        let th = GevParams::new(1.0, 0.0, 0.01).unwrap();
        assert!(hessian_from_sums(&th, &s).is_err());
    }

    #[test]
    fn large_sample_average_approaches_limit() {
        // Smoke version of the long-run averaging law at moderate n:
        // (1/n) S_{1,0,0} at θ₀ = Γ(ξ₀+1) ± O(1/√n).
        let th = GevParams::new(1.0, 0.0, 0.5).unwrap();
        let s = Sample::simulate(th, 20_000, 11).unwrap();
        let idx = SumStatIndex::new(1, 0, 0).unwrap();
        let mean = sum_stat(idx, &th, &s).unwrap() / 20_000.0;
        let limit = sum_stat_limit(idx, &th).unwrap();
        assert!(
            (mean - limit).abs() < 0.02,
            "mean {mean} vs limit {limit}"
        );
    }
}
