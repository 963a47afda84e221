//! Threshold calibration: empirical misclassification error, the quantized
//! threshold search, the per-round error-budget schedules, assembly of the
//! pessimistic testing threshold, and closed-form oracles for the uniform
//! ball.

use crate::environment::{sample_context, GroundTruth};
use crate::estimator::DesignState;
use crate::numerics::{
    adaptive_simpson, dot, ln_beta, min_eigenvalue, norm2, reg_inc_beta, NumericsError, RngStream,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibratorError {
    #[error("empirical distribution is empty")]
    EmptyDistribution,
    #[error("context norm {norm} exceeds the unit ball")]
    ContextOutsideBall { norm: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Append-only multiset of contexts serving as the plug-in estimate of the
/// context distribution.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalDistribution {
    contexts: Vec<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Vec<f64>) -> Result<(), CalibratorError> {
        let norm = norm2(&x);
        if norm > 1.0 + 1e-9 {
            return Err(CalibratorError::ContextOutsideBall { norm });
        }
        self.contexts.push(x);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }
}

/// A testing threshold, or the sentinel demanding a test on every context.
///
/// Early rounds routinely drive the inner error budget negative, in which
/// case no finite threshold is safe and the policy must test everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    AlwaysTest,
}

impl Threshold {
    pub fn is_always_test(&self) -> bool {
        matches!(self, Threshold::AlwaysTest)
    }

    /// The threshold as a float, with the sentinel mapping to +inf.
    pub fn as_f64(&self) -> f64 {
        match self {
            Threshold::Value(v) => *v,
            Threshold::AlwaysTest => f64::INFINITY,
        }
    }
}

/// Empirical misclassification error of the threshold rule: the average of
/// `(1 + exp(|x.theta|))^{-1}` over stored contexts with `|x.theta| > tau`
/// (strict inequality; ties at the threshold are tested, not predicted).
pub fn p_err_empirical(
    theta: &[f64],
    dist: &EmpiricalDistribution,
    tau: f64,
) -> Result<f64, CalibratorError> {
    if dist.is_empty() {
        return Err(CalibratorError::EmptyDistribution);
    }
    if !(tau >= 0.0) {
        return Err(CalibratorError::InvalidArgument("tau must be nonnegative"));
    }
    let mut total = 0.0;
    for x in dist.contexts() {
        let s = dot(x, theta).abs();
        if s > tau {
            total += 1.0 / (1.0 + s.exp());
        }
    }
    Ok(total / dist.len() as f64)
}

/// Smallest grid point of `{0, eps_q, 2 eps_q, ..., 1}` whose empirical error
/// is at most `alpha_eff`; `AlwaysTest` when no grid point qualifies.
///
/// One sort plus suffix sums instead of re-scoring every grid point: the
/// smallest feasible continuous threshold is an order statistic of the
/// scores, and the result is that value rounded up to the grid.
pub fn tau_star_quantized(
    theta: &[f64],
    dist: &EmpiricalDistribution,
    alpha_eff: f64,
    eps_q: f64,
) -> Result<Threshold, CalibratorError> {
    if dist.is_empty() {
        return Err(CalibratorError::EmptyDistribution);
    }
    if !(eps_q > 0.0 && eps_q <= 1.0) {
        return Err(CalibratorError::InvalidArgument("eps_q must lie in (0, 1]"));
    }
    if alpha_eff < 0.0 {
        // The error functional is nonnegative, so no threshold can comply.
        return Ok(Threshold::AlwaysTest);
    }
    match smallest_feasible_tau(theta, dist, alpha_eff) {
        Some(tau_c) => {
            let grid = round_up_to_grid(tau_c, eps_q);
            match grid {
                Some(g) => Ok(Threshold::Value(g)),
                None => Ok(Threshold::AlwaysTest),
            }
        }
        None => Ok(Threshold::AlwaysTest),
    }
}

/// Smallest continuous threshold with empirical error at most `alpha_eff`,
/// from the sorted-score representation. `None` if even tau = infinity would
/// not comply (cannot happen for alpha_eff >= 0) or if the minimum exceeds 1.
pub(crate) fn smallest_feasible_tau(
    theta: &[f64],
    dist: &EmpiricalDistribution,
    alpha_eff: f64,
) -> Option<f64> {
    let n = dist.len();
    let mut scores: Vec<f64> = dist.contexts().iter().map(|x| dot(x, theta).abs()).collect();
    scores.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    // suffix[k] = sum of error weights of scores[k..]; p_err(tau) * n = suffix[k(tau)]
    // with k(tau) the count of scores <= tau.
    let mut suffix = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + 1.0 / (1.0 + scores[k].exp());
    }
    let budget = alpha_eff * n as f64;
    let zeros = scores.partition_point(|&s| s <= 0.0);
    if suffix[zeros] <= budget {
        return Some(0.0);
    }
    let k_min = (zeros + 1..=n).find(|&k| suffix[k] <= budget)?;
    let tau_c = scores[k_min - 1];
    if tau_c > 1.0 {
        None
    } else {
        Some(tau_c)
    }
}

/// Smallest point of `{0, eps, 2 eps, ..., 1}` that is >= `v`, if any.
fn round_up_to_grid(v: f64, eps: f64) -> Option<f64> {
    if v <= 0.0 {
        return Some(0.0);
    }
    if v > 1.0 {
        return None;
    }
    let mut g = (v / eps).ceil() * eps;
    if g < v {
        g += eps;
    }
    if g > 1.0 {
        g = 1.0;
    }
    Some(g)
}

/// Distribution-estimation slack
/// `sqrt(((d+1) ln(1/eps_q) + ln(pi^2 t^2 / delta')) / (4 t))`.
///
/// A negative sum under the root means the underlying deviation bound is
/// vacuous; the slack is clamped at zero there.
pub fn zeta(t: usize, d: usize, eps_q: f64, delta_prime: f64) -> f64 {
    debug_assert!(t >= 1);
    let t_f = t as f64;
    let num = (d as f64 + 1.0) * (1.0 / eps_q).ln()
        + (std::f64::consts::PI.powi(2) * t_f * t_f / delta_prime).ln();
    (num.max(0.0) / (4.0 * t_f)).sqrt()
}

/// Deflated per-round error budget `max(0, alpha - sqrt(ln(2 t^2 / delta') / (2 t)))`;
/// a negative log (vacuous bound) subtracts nothing.
pub fn alpha_schedule(t: usize, alpha: f64, delta_prime: f64) -> f64 {
    debug_assert!(t >= 1);
    let t_f = t as f64;
    let sub = ((2.0 * t_f * t_f / delta_prime).ln().max(0.0) / (2.0 * t_f)).sqrt();
    (alpha - sub).max(0.0)
}

/// The quantization step in force at round `t`: `1 / t^2` floored at `eps_min`
/// so the grid stays affordable at long horizons.
pub fn eps_q_at(t: usize, eps_min: f64) -> f64 {
    (1.0 / (t as f64 * t as f64)).max(eps_min).min(1.0)
}

/// Everything the testing rule needs for one block of rounds.
#[derive(Debug, Clone)]
pub struct ThresholdBundle {
    pub tau: Threshold,
    pub alpha_t: f64,
    pub zeta_t: f64,
    pub eps_q: f64,
    /// Scaled confidence radius used in the assembly.
    pub b: f64,
    pub lambda_min: f64,
    pub b_over_sqrt_lambda: f64,
}

/// Assembles the pessimistic threshold
/// `tau_t = tau*_Q(theta, P_hat, alpha_t - zeta_t - 2 b / sqrt(lambda) - eps_q) + 3 b / sqrt(lambda) + eps_q`.
///
/// A negative inner budget propagates the `AlwaysTest` sentinel.
pub fn assemble_tau(
    theta_l: &[f64],
    dist: &EmpiricalDistribution,
    design: &DesignState,
    b: f64,
    t: usize,
    alpha: f64,
    delta_prime: f64,
    eps_min: f64,
) -> Result<ThresholdBundle, CalibratorError> {
    if dist.is_empty() {
        return Err(CalibratorError::EmptyDistribution);
    }
    let d = design.dim();
    let eps_q = eps_q_at(t, eps_min);
    let lambda_min = min_eigenvalue(design.matrix())?;
    let slack = b / lambda_min.sqrt();
    let alpha_t = alpha_schedule(t, alpha, delta_prime);
    let zeta_t = zeta(t, d, eps_q, delta_prime);
    let inner_budget = alpha_t - zeta_t - 2.0 * slack - eps_q;
    let inner = tau_star_quantized(theta_l, dist, inner_budget, eps_q)?;
    let tau = match inner {
        Threshold::AlwaysTest => Threshold::AlwaysTest,
        Threshold::Value(v) => Threshold::Value(v + 3.0 * slack + eps_q),
    };
    Ok(ThresholdBundle {
        tau,
        alpha_t,
        zeta_t,
        eps_q,
        b,
        lambda_min,
        b_over_sqrt_lambda: slack,
    })
}

/// Analytic threshold/test-rate pair for the uniform ball.
#[derive(Debug, Clone, Copy)]
pub struct UniformBallOracle {
    pub tau_star: f64,
    pub p_star: f64,
    /// Error of the never-test policy; alpha above this makes tau* = 0.
    pub p_err_at_zero: f64,
}

/// Population misclassification error of threshold `tau` under the uniform
/// ball: `2 C_d * int_tau^1 (1 + e^s)^{-1} (1 - s^2)^{(d-1)/2} ds` with
/// `C_d = 1 / B(1/2, (d+1)/2)` normalizing the score marginal.
pub fn p_err_uniform_ball(tau: f64, d: usize) -> f64 {
    if tau >= 1.0 {
        return 0.0;
    }
    let tau = tau.max(0.0);
    let half_exp = (d as f64 - 1.0) / 2.0;
    let c = (-ln_beta(0.5, (d as f64 + 1.0) / 2.0)).exp();
    let integrand = move |s: f64| (1.0 - s * s).powf(half_exp) / (1.0 + s.exp());
    2.0 * c * adaptive_simpson(&integrand, tau, 1.0, 1e-12)
}

/// Solves `p_err(tau) = alpha` for the uniform ball by bisection and reports
/// the induced testing mass `p* = I_{tau^2}(1/2, (d+1)/2)`.
pub fn oracle_tau_p_star(alpha: f64, d: usize) -> Result<UniformBallOracle, CalibratorError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(CalibratorError::InvalidArgument("alpha must lie in (0, 0.5)"));
    }
    let p_err_at_zero = p_err_uniform_ball(0.0, d);
    if alpha >= p_err_at_zero {
        // Never testing already meets the budget.
        return Ok(UniformBallOracle { tau_star: 0.0, p_star: 0.0, p_err_at_zero });
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if p_err_uniform_ball(mid, d) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau_star = 0.5 * (lo + hi);
    let p_star = reg_inc_beta(tau_star * tau_star, 0.5, (d as f64 + 1.0) / 2.0)?;
    Ok(UniformBallOracle { tau_star, p_star, p_err_at_zero })
}

/// Monte-Carlo estimate of (tau*, p*) by inverting the empirical error curve
/// on `n` fresh context draws. Used to cross-check the analytic oracle and as
/// the fallback for non-uniform distributions.
#[derive(Debug, Clone, Copy)]
pub struct McOracle {
    pub tau_star: f64,
    pub p_star: f64,
    /// Binomial standard error of `p_star`.
    pub p_star_std_error: f64,
}

pub fn mc_tau_p_star(
    gt: &GroundTruth,
    alpha: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<McOracle, CalibratorError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(CalibratorError::InvalidArgument("alpha must lie in (0, 0.5)"));
    }
    if n == 0 {
        return Err(CalibratorError::InvalidArgument("need a positive sample budget"));
    }
    let mut scores: Vec<f64> = (0..n)
        .map(|_| dot(&sample_context(&gt.distribution, rng), gt.theta_star()).abs())
        .collect();
    scores.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let mut suffix = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + 1.0 / (1.0 + scores[k].exp());
    }
    let budget = alpha * n as f64;
    let k_min = (0..=n).find(|&k| suffix[k] <= budget).expect("suffix[n] = 0 <= budget");
    let (tau_star, p_star) = if k_min == 0 {
        (0.0, 0.0)
    } else {
        (scores[k_min - 1], k_min as f64 / n as f64)
    };
    let p_star_std_error = (p_star * (1.0 - p_star) / n as f64).sqrt();
    Ok(McOracle { tau_star, p_star, p_star_std_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ContextDistribution, GroundTruth};

    fn dist_from_scores(scores: &[f64]) -> (Vec<f64>, EmpiricalDistribution) {
        // Embed scalar scores as 2-d contexts along theta = e1.
        let theta = vec![1.0, 0.0];
        let mut dist = EmpiricalDistribution::new();
        for &s in scores {
            dist.push(vec![s, 0.0]).unwrap();
        }
        (theta, dist)
    }

    #[test]
    fn p_err_zero_beyond_unit_threshold() {
        let (theta, dist) = dist_from_scores(&[0.1, -0.7, 0.99]);
        assert_eq!(p_err_empirical(&theta, &dist, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn p_err_strict_indicator_at_zero() {
        let (theta, dist) = dist_from_scores(&[0.0]);
        assert_eq!(p_err_empirical(&theta, &dist, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn p_err_hand_enumerated_value() {
        let (theta, dist) = dist_from_scores(&[0.2, 0.5, 0.9]);
        // Only 0.5 and 0.9 clear tau = 0.4: ((1+e^0.5)^-1 + (1+e^0.9)^-1) / 3.
        let expected = (1.0 / (1.0 + 0.5f64.exp()) + 1.0 / (1.0 + 0.9f64.exp())) / 3.0;
        let got = p_err_empirical(&theta, &dist, 0.4).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.222_197_06).abs() < 1e-5);
    }

    #[test]
    fn p_err_rejects_empty_distribution() {
        let dist = EmpiricalDistribution::new();
        assert!(matches!(
            p_err_empirical(&[1.0], &dist, 0.5),
            Err(CalibratorError::EmptyDistribution)
        ));
    }

    #[test]
    fn p_err_monotone_and_bounded() {
        let mut rng = RngStream::new(2);
        let dist_spec = ContextDistribution::uniform_ball(3);
        for _ in 0..1000 {
            let mut dist = EmpiricalDistribution::new();
            for _ in 0..30 {
                dist.push(sample_context(&dist_spec, &mut rng)).unwrap();
            }
            let theta: Vec<f64> = (0..3).map(|_| rng.standard_normal() * 0.5).collect();
            let t1 = rng.uniform();
            let t2 = t1 + rng.uniform() * (1.0 - t1);
            let p1 = p_err_empirical(&theta, &dist, t1).unwrap();
            let p2 = p_err_empirical(&theta, &dist, t2).unwrap();
            assert!(p2 <= p1 + 1e-15);
            assert!((0.0..=0.5).contains(&p1));
        }
    }

    #[test]
    fn tau_quantized_generous_budget_returns_zero() {
        let (theta, dist) = dist_from_scores(&[0.3, 0.8, -0.5]);
        assert_eq!(
            tau_star_quantized(&theta, &dist, 0.5, 0.1).unwrap(),
            Threshold::Value(0.0)
        );
    }

    #[test]
    fn tau_quantized_hand_computed_case() {
        let (theta, dist) = dist_from_scores(&[0.2, 0.5, 0.9]);
        // p_err(0.2) = 0.22220 <= 0.25 but p_err(0.1) = 0.37226 > 0.25.
        assert_eq!(
            tau_star_quantized(&theta, &dist, 0.25, 0.1).unwrap(),
            Threshold::Value(0.2)
        );
    }

    #[test]
    fn tau_quantized_negative_budget_is_always_test() {
        let (theta, dist) = dist_from_scores(&[0.2]);
        assert_eq!(
            tau_star_quantized(&theta, &dist, -0.01, 0.1).unwrap(),
            Threshold::AlwaysTest
        );
    }

    #[test]
    fn tau_quantized_matches_direct_grid_scan() {
        // Independent oracle: evaluate p_err_empirical at every grid point.
        let mut rng = RngStream::new(7);
        let spec = ContextDistribution::uniform_ball(2);
        for trial in 0..200 {
            let mut dist = EmpiricalDistribution::new();
            for _ in 0..40 {
                dist.push(sample_context(&spec, &mut rng)).unwrap();
            }
            let theta: Vec<f64> = (0..2).map(|_| rng.standard_normal() * 0.6).collect();
            let alpha = rng.uniform() * 0.4;
            let eps = 0.05;
            let got = tau_star_quantized(&theta, &dist, alpha, eps).unwrap();
            let mut expected = Threshold::AlwaysTest;
            let mut k = 0usize;
            loop {
                let g = (k as f64 * eps).min(1.0);
                if p_err_empirical(&theta, &dist, g).unwrap() <= alpha {
                    expected = Threshold::Value(g);
                    break;
                }
                if g >= 1.0 {
                    break;
                }
                k += 1;
            }
            match (got, expected) {
                (Threshold::Value(a), Threshold::Value(b)) => {
                    assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}")
                }
                (a, b) => assert_eq!(a, b, "trial {trial}"),
            }
        }
    }

    #[test]
    fn tau_quantized_nonincreasing_in_budget() {
        let mut rng = RngStream::new(11);
        let spec = ContextDistribution::uniform_ball(2);
        let mut dist = EmpiricalDistribution::new();
        for _ in 0..60 {
            dist.push(sample_context(&spec, &mut rng)).unwrap();
        }
        let theta = vec![0.7, -0.2];
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let alpha = i as f64 * 0.01;
            let tau = tau_star_quantized(&theta, &dist, alpha, 0.01).unwrap().as_f64();
            assert!(tau <= prev + 1e-12);
            prev = tau;
        }
    }

    #[test]
    fn zeta_vanishes_when_both_logs_vanish() {
        assert_eq!(zeta(1, 2, 1.0, std::f64::consts::PI.powi(2)), 0.0);
    }

    #[test]
    fn zeta_frozen_value() {
        // Direct formula evaluation at t = 100, d = 2, eps = 1e-4, delta' = 0.01.
        let got = zeta(100, 2, 1e-4, 0.01);
        assert!((got - 0.330_665_962_285_172_4).abs() < 1e-12, "{got}");
    }

    #[test]
    fn zeta_decays_with_the_schedule() {
        // With eps_q = 1/t^2 the slack shrinks below 0.01 by t = 1e6.
        let t = 1_000_000;
        let z = zeta(t, 2, 1.0 / (t as f64 * t as f64), 0.01);
        assert!(z < 0.01, "{z}");
    }

    #[test]
    fn alpha_schedule_edge_cases_and_frozen_value() {
        // ln(2 t^2 / delta') = ln 1 = 0 at t = 1, delta' = 2.
        assert_eq!(alpha_schedule(1, 0.37, 2.0), 0.37);
        // Direct formula evaluation at t = 1e4, alpha = 0.1, delta' = 0.01.
        let got = alpha_schedule(10_000, 0.1, 0.01);
        assert!((got - 0.065_562_376_598_768_9).abs() < 1e-12, "{got}");
        // Clamp binds for small t and tight delta'.
        assert_eq!(alpha_schedule(2, 0.1, 1e-6), 0.0);
    }

    #[test]
    fn assemble_matches_hand_chained_pipeline() {
        let mut rng = RngStream::new(13);
        let spec = ContextDistribution::uniform_ball(2);
        let mut dist = EmpiricalDistribution::new();
        for _ in 0..100 {
            dist.push(sample_context(&spec, &mut rng)).unwrap();
        }
        let mut design = DesignState::new(2, 6.0);
        for _ in 0..50 {
            design.update(&sample_context(&spec, &mut rng));
        }
        let theta = vec![0.6, 0.3];
        let (b, t, alpha, dp, eps_min) = (1.5, 400, 0.3, 0.05, 1e-4);
        let bundle = assemble_tau(&theta, &dist, &design, b, t, alpha, dp, eps_min).unwrap();

        // Hand-compose the same pipeline from the public sub-operations.
        let eps_q = eps_q_at(t, eps_min);
        let lam = min_eigenvalue(design.matrix()).unwrap();
        let slack = b / lam.sqrt();
        let inner = alpha_schedule(t, alpha, dp) - zeta(t, 2, eps_q, dp) - 2.0 * slack - eps_q;
        let tau_inner = tau_star_quantized(&theta, &dist, inner, eps_q).unwrap();
        match (bundle.tau, tau_inner) {
            (Threshold::Value(got), Threshold::Value(inner_v)) => {
                assert!((got - (inner_v + 3.0 * slack + eps_q)).abs() < 1e-15);
            }
            (Threshold::AlwaysTest, Threshold::AlwaysTest) => {}
            (a, b) => panic!("bundle {a:?} disagrees with chained {b:?}"),
        }
        assert!((bundle.lambda_min - lam).abs() < 1e-15);
        assert!((bundle.eps_q - eps_q).abs() < 1e-18);
    }

    #[test]
    fn assemble_negative_inner_budget_propagates_sentinel() {
        let mut dist = EmpiricalDistribution::new();
        dist.push(vec![0.5, 0.0]).unwrap();
        let design = DesignState::new(2, 6.0);
        // Huge b forces the inner budget below zero.
        let bundle = assemble_tau(&[1.0, 0.0], &dist, &design, 50.0, 3, 0.1, 0.01, 1e-4).unwrap();
        assert!(bundle.tau.is_always_test());
    }

    #[test]
    fn assemble_with_vanishing_inflations_is_plain_quantized_tau() {
        // b = 0 kills the ellipsoid terms; at t = 1e9 the schedule and
        // quantization slacks (~1e-4) are far smaller than the gaps between
        // the finitely many empirical error levels of this fixture, so the
        // assembled threshold collapses to the plain quantized threshold at
        // the scheduled budget, up to the eps_q summand.
        let (theta, dist) = dist_from_scores(&[0.2, 0.5, 0.9]);
        let design = DesignState::new(2, 6.0);
        let t = 1_000_000_000;
        let eps_min = 1e-9;
        let bundle = assemble_tau(&theta, &dist, &design, 0.0, t, 0.3, 2.0, eps_min).unwrap();
        let eps_q = eps_q_at(t, eps_min);
        let alpha_t = alpha_schedule(t, 0.3, 2.0);
        let reference = tau_star_quantized(&theta, &dist, alpha_t, eps_q).unwrap();
        match (bundle.tau, reference) {
            (Threshold::Value(a), Threshold::Value(b)) => {
                assert!((a - b).abs() <= 2.0 * eps_q, "{a} vs {b}")
            }
            _ => panic!("expected finite thresholds"),
        }
    }

    #[test]
    fn oracle_boundary_alpha_above_never_test_error() {
        let o = oracle_tau_p_star(0.45, 2).unwrap();
        assert_eq!(o.tau_star, 0.0);
        assert_eq!(o.p_star, 0.0);
        assert!(o.p_err_at_zero < 0.45);
    }

    #[test]
    fn oracle_rejects_bad_alpha() {
        assert!(oracle_tau_p_star(0.0, 2).is_err());
        assert!(oracle_tau_p_star(0.5, 2).is_err());
        assert!(oracle_tau_p_star(-0.2, 2).is_err());
    }

    #[test]
    fn oracle_p_star_cross_checked_against_marginal_quadrature() {
        // p* must equal the direct integral of the score marginal on [-tau, tau].
        for (d, alpha) in [(2usize, 0.1f64), (2, 0.05), (8, 0.1), (5, 0.2)] {
            let o = oracle_tau_p_star(alpha, d).unwrap();
            let half_exp = (d as f64 - 1.0) / 2.0;
            let c = (-ln_beta(0.5, (d as f64 + 1.0) / 2.0)).exp();
            let marginal = move |s: f64| c * (1.0 - s * s).powf(half_exp);
            let quad = 2.0 * adaptive_simpson(&marginal, 0.0, o.tau_star, 1e-12);
            assert!((o.p_star - quad).abs() < 1e-6, "d={d} alpha={alpha}: {} vs {quad}", o.p_star);
        }
    }

    #[test]
    fn oracle_consistency_with_p_err_at_tau_star() {
        let o = oracle_tau_p_star(0.1, 2).unwrap();
        assert!((p_err_uniform_ball(o.tau_star, 2) - 0.1).abs() < 1e-7);
        // Spot value frozen from an independent quadrature + root find.
        assert!((o.tau_star - 0.574_655_94).abs() < 1e-6, "{}", o.tau_star);
        assert!((o.p_star - 0.689_127_72).abs() < 1e-6, "{}", o.p_star);
    }

    #[test]
    fn mc_oracle_close_to_analytic() {
        let gt =
            GroundTruth::sampled(ContextDistribution::uniform_ball(2), &mut RngStream::new(5));
        let mut rng = RngStream::new(6);
        let mc = mc_tau_p_star(&gt, 0.1, 1_000_000, &mut rng).unwrap();
        let o = oracle_tau_p_star(0.1, 2).unwrap();
        assert!((mc.tau_star - o.tau_star).abs() < 0.005);
        assert!((mc.p_star - o.p_star).abs() < 0.005);
    }
}
