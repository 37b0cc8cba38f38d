//! Laplace approximation of the posterior and the associated approximate
//! evidence.
//!
//! With `L_n` the log likelihood, `θ̂` its local maximizer and `π` the
//! prior density, the second-order expansion of `∫ π(θ) e^{L_n(θ)} dθ`
//! around `θ̂` gives the approximate evidence
//!
//! ```text
//! log B_n = (3/2)·log 2π − (1/2)·log det(−∇²L_n(θ̂)) + log π(θ̂) + L_n(θ̂).
//! ```
//!
//! `L_n(θ̂)` is evaluated by **two distinct routes** that agree only at a
//! genuine critical point: the generic log likelihood, and a closed form
//! that replaces the transformed-observation sum `Σ w_i^{−1/ξ̂}` by `n`
//! via the stationarity identity. Their gap is reported and serves as an
//! anti-regression certificate — a bug in either the optimizer or the
//! likelihood shows up as a route disagreement, not as a silently wrong
//! evidence value.
//!
//! The per-observation limit of the approximate evidence has the closed
//! form `B_n^{1/n} → τ₀^{−1} exp{−(ξ₀+1)γ − 1}` under sampling at θ₀; it
//! is exposed here and pinned by tests.

use crate::estimation::{local_mle, observed_info, MleFit, ObservedInfo};
use crate::gev::{obs_blocks, GevParams, Sample};
use crate::numeric::KahanSum;
use crate::priors::PriorSpec;
use crate::specfun::{std_normal_cdf, EULER_GAMMA};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Laplace approximation at a fitted local maximum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceFit {
    /// The underlying likelihood fit.
    pub fit: MleFit,
    /// Observed information −∇²L_n(θ̂) and its factorizations.
    pub info: ObservedInfo,
    /// Prior the evidence is computed under.
    pub prior: PriorSpec,
    /// log B_n via the generic log-likelihood route.
    pub log_bn: f64,
    /// log B_n via the stationarity-identity route.
    pub log_bn_stationary: f64,
    /// |route difference|; bounded by the absolute stationarity gap
    /// `|Σ w_i^{−1/ξ̂} − n|` of the fit.
    pub route_gap: f64,
}

/// Fit (unless one is supplied) and assemble the Laplace approximation of
/// the evidence under `prior`. Errors when no certified critical point is
/// available or the observed information is not positive definite.
pub fn laplace_fit(
    sample: &Sample,
    prior: &PriorSpec,
    fit: Option<MleFit>,
    tol: Option<f64>,
) -> Result<LaplaceFit> {
    prior.validate()?;
    let fit = match fit {
        Some(f) => f,
        None => local_mle(sample, None, tol)?,
    };
    if !fit.converged {
        return Err(Error::Convergence(format!(
            "likelihood maximization did not certify a critical point (score norm {:.3e})",
            fit.score_norm
        )));
    }
    let info = observed_info(&fit.theta, sample)?;
    let log_prior = prior.log_density(&fit.theta);
    if !log_prior.is_finite() {
        return Err(Error::Domain(
            "prior density is zero or undefined at the likelihood maximum".into(),
        ));
    }
    let n = sample.n() as f64;
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let common = 3.0 * half_log_2pi - 0.5 * info.log_det + log_prior;

    // Route 1: generic likelihood evaluation.
    let log_bn = common + fit.log_lik;
    // Route 2: the stationarity identity Σ w_i^{−1/ξ̂} = n turns the
    // likelihood at the maximum into −n log τ̂ − n − (1+ξ̂)·Σ q_i with
    // q_i = log(w_i)/ξ̂ evaluated in its shape-stable form.
    let mut q_sum = KahanSum::new();
    for &y in sample.values() {
        let z = fit.theta.standardize(y);
        let blocks = obs_blocks(fit.theta.xi, z).ok_or_else(|| {
            Error::SupportViolation(
                "fitted maximum leaves part of the sample outside the support".into(),
            )
        })?;
        q_sum.add(blocks.q);
    }
    let ll_stationary =
        -n * fit.theta.tau.ln() - n - (1.0 + fit.theta.xi) * q_sum.value();
    let log_bn_stationary = common + ll_stationary;

    Ok(LaplaceFit {
        fit,
        info,
        prior: *prior,
        log_bn,
        log_bn_stationary,
        route_gap: (log_bn - log_bn_stationary).abs(),
    })
}

/// Limit of `(1/n)·log B_n` under sampling at θ₀ (with a scale-invariant
/// prior of fixed shape weight): `−log τ₀ − (ξ₀+1)γ − 1`.
pub fn bn_rate_limit_log(theta0: &GevParams) -> f64 {
    -theta0.tau.ln() - (theta0.xi + 1.0) * EULER_GAMMA - 1.0
}

/// Limit of `B_n^{1/n}`: `τ₀^{−1} exp{−(ξ₀+1)γ − 1}`.
pub fn bn_rate_limit(theta0: &GevParams) -> f64 {
    bn_rate_limit_log(theta0).exp()
}

/// Probability that a standard 3-dimensional Gaussian vector lands in the
/// axis-parallel box `Π_i [lo_i, hi_i]` (coordinates independent, so the
/// mass factorizes into one-dimensional normal CDF differences).
pub fn gaussian_box_prob(lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut p = 1.0;
    for i in 0..3 {
        if hi[i] <= lo[i] {
            return 0.0;
        }
        p *= std_normal_cdf(hi[i]) - std_normal_cdf(lo[i]);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bn_rate_limit_reference_values() {
        // Frozen from the closed form at 30-digit precision.
        let cases = [
            (1.0, 0.5, -1.865_823_497_352_299_3, 0.154_768_705_773_040_45),
            (1.0, 0.0, -1.577_215_664_901_532_9, 0.206_549_401_054_992_32),
            (2.0, 0.5, -2.558_970_677_912_244_5, 0.077_384_352_886_520_22),
        ];
        for &(tau, xi, log_expect, lin_expect) in &cases {
            let th = GevParams::new(tau, 0.0, xi).unwrap();
            assert!((bn_rate_limit_log(&th) - log_expect).abs() < 1e-15);
            assert!((bn_rate_limit(&th) - lin_expect).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_box_reference_values() {
        // Whole space, central cube with unit cuts, and one octant.
        let inf = f64::INFINITY;
        assert!((gaussian_box_prob([-inf; 3], [inf; 3]) - 1.0).abs() < 1e-15);
        let central = gaussian_box_prob([-1.0; 3], [1.0; 3]);
        assert!((central - 0.318_177_639_017_280_9).abs() < 1e-14);
        let octant = gaussian_box_prob([0.0; 3], [inf; 3]);
        assert!((octant - 0.125).abs() < 1e-15);
        // Degenerate boxes carry no mass.
        assert_eq!(gaussian_box_prob([1.0, -1.0, -1.0], [0.0, 1.0, 1.0]), 0.0);
        // The 27 boxes cut at ±1 partition all mass.
        let cuts = [f64::NEG_INFINITY, -1.0, 1.0, inf];
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    total += gaussian_box_prob(
                        [cuts[i], cuts[j], cuts[k]],
                        [cuts[i + 1], cuts[j + 1], cuts[k + 1]],
                    );
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_routes_agree_at_certified_maximum() {
        let th0 = GevParams::new(1.0, 0.0, 0.4).unwrap();
        let s = Sample::simulate(th0, 2000, 11).unwrap();
        let prior = PriorSpec::reference();
        // Default tolerance: the route gap is bounded by the absolute
        // stationarity gap n·|Σw^{−1/ξ̂}/n − 1|.
        let lap = laplace_fit(&s, &prior, None, None).unwrap();
        let bound = 2000.0 * lap.fit.score_identity_gap * (1.0 + 1e-6) + 1e-12;
        assert!(
            lap.route_gap <= bound,
            "route gap {} exceeds stationarity bound {}",
            lap.route_gap,
            bound
        );
        assert!(lap.route_gap < 5e-5);
        // Tighter optimization shrinks the route gap accordingly.
        let tight = laplace_fit(&s, &prior, None, Some(1e-11 * 2000.0)).unwrap();
        assert!(
            tight.route_gap < 1e-7,
            "tight-fit route gap {}",
            tight.route_gap
        );
        assert!(tight.log_bn.is_finite());
    }

    #[test]
    fn per_observation_evidence_rate_approaches_limit() {
        // Smoke check of the asymptotic rate at a moderate sample size;
        // the tight version is an acceptance-level run.
        let th0 = GevParams::new(1.0, 0.0, 0.5).unwrap();
        let s = Sample::simulate(th0, 2000, 29).unwrap();
        let lap = laplace_fit(&s, &PriorSpec::reference(), None, None).unwrap();
        let rate = lap.log_bn / 2000.0;
        let limit = bn_rate_limit_log(&th0);
        assert!(
            (rate - limit).abs() < 0.1,
            "rate {rate} vs limit {limit}"
        );
    }

    #[test]
    fn laplace_rejects_unusable_inputs() {
        let th0 = GevParams::new(1.0, 0.0, 0.2).unwrap();
        let s = Sample::simulate(th0, 300, 4).unwrap();
        // A prior that vanishes at the maximum is rejected: shape weight
        // with an extreme negative tail index still has positive density,
        // so force rejection through an unconverged synthetic fit instead.
        let mut fake = local_mle(&s, None, None).unwrap();
        fake.converged = false;
        assert!(laplace_fit(&s, &PriorSpec::reference(), Some(fake), None).is_err());
        let bad_prior = PriorSpec::ProperIndep {
            log_tau_mean: 0.0,
            log_tau_sd: -1.0,
            mu_mean: 0.0,
            mu_sd: 1.0,
            xi_mean: 0.0,
            xi_sd: 1.0,
        };
        assert!(laplace_fit(&s, &bad_prior, None, None).is_err());
    }
}
