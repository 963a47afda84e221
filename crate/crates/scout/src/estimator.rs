//! Regularized logistic maximum likelihood, design-matrix bookkeeping, the
//! confidence-ellipsoid radius, and the optional projection onto the unit
//! ball in the data-dependent metric.

use crate::numerics::{dot, log1p_exp, logistic, norm2, solve_spd, Cholesky, NumericsError, SymMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("newton solver did not converge after {iters} iterations (gradient norm {grad_norm:.3e})")]
    NoConvergence { iters: usize, grad_norm: f64 },
    #[error("line search failed to find an ascent step")]
    LineSearchFailed,
    #[error("projection did not converge after {iters} iterations (residual {residual:.3e})")]
    ProjectionNoConvergence { iters: usize, residual: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A (context, label) pair in the parameter-estimation set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: bool,
}

/// The regularized design matrix `V = kappa I + sum x x^T` over the labeled
/// set, plus the count of rank-one updates applied.
#[derive(Debug, Clone)]
pub struct DesignState {
    v: SymMatrix,
    n_theta: usize,
    kappa: f64,
}

impl DesignState {
    pub fn new(d: usize, kappa: f64) -> Self {
        assert!(kappa > 0.0);
        Self { v: SymMatrix::scaled_identity(d, kappa), n_theta: 0, kappa }
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert!(norm2(x) <= 1.0 + 1e-9);
        self.v.add_outer(x);
        self.n_theta += 1;
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.v
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }
}

/// Current parameter estimates: the unconstrained MLE, its projected
/// counterpart, and the confidence radius in force.
#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub theta_hat: Vec<f64>,
    pub theta_l: Vec<f64>,
    pub b: f64,
}

/// Ridge-regularized Bernoulli log-likelihood
/// `sum_s [y_s ln mu(x_s . theta) + (1 - y_s) ln(1 - mu(x_s . theta))] - ||theta||^2 / 2`.
pub fn regularized_log_likelihood(theta: &[f64], samples: &[LabeledSample]) -> f64 {
    let mut ll = -0.5 * dot(theta, theta);
    for s in samples {
        let z = dot(&s.x, theta);
        // ln mu(z) = -ln(1 + e^{-z}); ln(1 - mu(z)) = -ln(1 + e^{z}).
        ll -= if s.y { log1p_exp(-z) } else { log1p_exp(z) };
    }
    ll
}

/// Gradient of the regularized log-likelihood.
pub fn log_likelihood_gradient(theta: &[f64], samples: &[LabeledSample]) -> Vec<f64> {
    let d = theta.len();
    let mut g: Vec<f64> = theta.iter().map(|v| -v).collect();
    for s in samples {
        let resid = (s.y as u8 as f64) - logistic(dot(&s.x, theta));
        for i in 0..d {
            g[i] += resid * s.x[i];
        }
    }
    g
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-10;

/// Maximizer of the regularized log-likelihood, by damped Newton with
/// backtracking. Deterministic given inputs; errors rather than returning a
/// non-converged point.
pub fn fit_mle(
    samples: &[LabeledSample],
    warm_start: Option<&[f64]>,
    d: usize,
) -> Result<Vec<f64>, EstimatorError> {
    if samples.is_empty() {
        // Only the ridge term remains; its maximizer is the origin.
        return Ok(vec![0.0; d]);
    }
    let mut theta = warm_start.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; d]);
    let mut obj = regularized_log_likelihood(&theta, samples);
    for iter in 0..NEWTON_MAX_ITER {
        let grad = log_likelihood_gradient(&theta, samples);
        let gnorm = norm2(&grad);
        if gnorm <= NEWTON_GRAD_TOL {
            return Ok(theta);
        }
        // Negated Hessian: sum mu'(x.theta) x x^T + I, always PD.
        let mut h = SymMatrix::scaled_identity(d, 1.0);
        for s in samples {
            let mu = logistic(dot(&s.x, &theta));
            let w = (mu * (1.0 - mu)).sqrt();
            let scaled: Vec<f64> = s.x.iter().map(|v| v * w).collect();
            h.add_outer(&scaled);
        }
        let direction = solve_spd(&h, &grad)?;
        let slope = dot(&grad, &direction);
        // Near the maximizer the true per-step gain is below the rounding
        // noise of the objective sum; the allowance keeps the full Newton
        // step acceptable there instead of stalling on no-op steps.
        let noise = 1e-12 * (1.0 + obj.abs());
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> =
                theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect();
            let cand_obj = regularized_log_likelihood(&candidate, samples);
            if cand_obj >= obj + 1e-4 * step * slope - noise {
                debug_assert!(cand_obj >= obj - noise, "newton step decreased the objective");
                theta = candidate;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(EstimatorError::LineSearchFailed);
        }
        if iter == NEWTON_MAX_ITER - 1 {
            let gnorm = norm2(&log_likelihood_gradient(&theta, samples));
            if gnorm > NEWTON_GRAD_TOL {
                return Err(EstimatorError::NoConvergence { iters: NEWTON_MAX_ITER, grad_norm: gnorm });
            }
        }
    }
    let gnorm = norm2(&log_likelihood_gradient(&theta, samples));
    if gnorm <= NEWTON_GRAD_TOL {
        Ok(theta)
    } else {
        Err(EstimatorError::NoConvergence { iters: NEWTON_MAX_ITER, grad_norm: gnorm })
    }
}

/// Confidence-ellipsoid radius
/// `2 kappa (1 + sqrt(ln(1/delta') + 2 d ln(1 + n / (kappa d))))`.
pub fn confidence_radius(n_theta: usize, d: usize, kappa: f64, delta_prime: f64) -> f64 {
    debug_assert!(delta_prime > 0.0 && delta_prime <= 1.0);
    let inner = (1.0 / delta_prime).ln()
        + 2.0 * d as f64 * (1.0 + n_theta as f64 / (kappa * d as f64)).ln();
    2.0 * kappa * (1.0 + inner.sqrt())
}

const PROJECTION_MAX_ITER: usize = 500;
const PROJECTION_TOL: f64 = 1e-8;

/// Projects `theta_hat` onto the unit ball by minimizing
/// `||g(theta) - g(theta_hat)||_{V^{-1}}` with `g(theta) = sum mu(x_s . theta) x_s + theta`.
/// Feasible inputs are returned unchanged.
///
/// The objective has its unique critical point at `theta_hat` (g is strictly
/// monotone), so an infeasible input puts the constrained minimum on the
/// sphere. The solver walks the sphere directly: Newton steps in the tangent
/// space with normalization as the retraction, falling back to tangential
/// gradient steps whenever the Newton model is not a descent direction, until
/// the tangential gradient norm drops below 1e-8.
pub fn project_theta(
    theta_hat: &[f64],
    design: &DesignState,
    samples: &[LabeledSample],
) -> Result<Vec<f64>, EstimatorError> {
    if norm2(theta_hat) <= 1.0 {
        return Ok(theta_hat.to_vec());
    }
    let d = theta_hat.len();
    let chol = Cholesky::new(design.matrix())?;
    let g_of = |theta: &[f64]| -> Vec<f64> {
        let mut g = theta.to_vec();
        for s in samples {
            let mu = logistic(dot(&s.x, theta));
            for i in 0..d {
                g[i] += mu * s.x[i];
            }
        }
        g
    };
    let g_target = g_of(theta_hat);
    // f = r^T V^{-1} r / 2 with r = g(theta) - g(theta_hat);
    // grad f = J V^{-1} r with J = sum mu' x x^T + I;
    // hess f = J V^{-1} J + sum mu'' (x^T V^{-1} r) x x^T.
    let eval = |theta: &[f64]| -> (f64, Vec<f64>, SymMatrix) {
        let g = g_of(theta);
        let r: Vec<f64> = g.iter().zip(&g_target).map(|(a, b)| a - b).collect();
        let w = chol.solve(&r);
        let f = 0.5 * dot(&r, &w);
        let mut grad = w.clone();
        let mut jac = SymMatrix::scaled_identity(d, 1.0);
        let mut curva = SymMatrix::zeros(d);
        for s in samples {
            let mu = logistic(dot(&s.x, theta));
            let mu1 = mu * (1.0 - mu);
            let xw = dot(&s.x, &w);
            for i in 0..d {
                grad[i] += mu1 * xw * s.x[i];
            }
            let scaled: Vec<f64> = s.x.iter().map(|v| v * mu1.sqrt()).collect();
            jac.add_outer(&scaled);
            let mu2 = mu1 * (1.0 - 2.0 * mu);
            let c = mu2 * xw;
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| c * s.x[i] * s.x[j]).collect())
                .collect();
            let add = SymMatrix::from_rows(&rows);
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| curva.get(i, j) + add.get(i, j)).collect())
                .collect();
            curva = SymMatrix::from_rows(&rows);
        }
        // hess = J V^{-1} J + curva, built densely.
        let mut hess_rows = vec![vec![0.0; d]; d];
        for j in 0..d {
            let col: Vec<f64> = (0..d).map(|i| jac.get(i, j)).collect();
            let vj = chol.solve(&col);
            for i in 0..d {
                let row_i: Vec<f64> = (0..d).map(|k| jac.get(i, k)).collect();
                hess_rows[i][j] = dot(&row_i, &vj) + curva.get(i, j);
            }
        }
        (f, grad, SymMatrix::from_rows(&hess_rows))
    };
    let retract = |theta: &[f64], step: &[f64]| -> Vec<f64> {
        let moved: Vec<f64> = theta.iter().zip(step).map(|(t, s)| t + s).collect();
        let n = norm2(&moved);
        moved.into_iter().map(|c| c / n).collect()
    };
    let tangential = |theta: &[f64], v: &[f64]| -> Vec<f64> {
        let radial = dot(theta, v);
        v.iter().zip(theta).map(|(vi, ti)| vi - radial * ti).collect()
    };

    let n0 = norm2(theta_hat);
    let mut theta: Vec<f64> = theta_hat.iter().map(|v| v / n0).collect();
    let (mut f, mut grad, mut hess) = eval(&theta);
    for _iter in 0..PROJECTION_MAX_ITER {
        let grad_t = tangential(&theta, &grad);
        let gnorm = norm2(&grad_t);
        if gnorm <= PROJECTION_TOL {
            return Ok(theta);
        }
        // Tangent-space Newton system: P (hess - nu I) P delta = -grad_t,
        // with nu the radial gradient component; the theta theta^T block pins
        // the radial coordinate so the system is invertible.
        let nu = dot(&theta, &grad);
        let mut direction: Option<Vec<f64>> = None;
        {
            let mut rows = vec![vec![0.0; d]; d];
            for j in 0..d {
                let e: Vec<f64> = (0..d).map(|i| hess.get(i, j)).collect();
                let col = tangential(&theta, &e);
                for i in 0..d {
                    rows[i][j] = col[i];
                }
            }
            // rows currently hold P hess; complete P hess P - nu P + theta theta^T.
            let mut sys = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in 0..d {
                    let mut pij = -theta[i] * theta[j];
                    if i == j {
                        pij += 1.0;
                    }
                    let mut hp = 0.0;
                    for k in 0..d {
                        let pkj = if k == j { 1.0 } else { 0.0 } - theta[k] * theta[j];
                        hp += rows[i][k] * pkj;
                    }
                    sys[i][j] = hp - nu * pij + theta[i] * theta[j];
                }
            }
            if let Ok(chol_sys) = Cholesky::new(&SymMatrix::from_rows(&sys)) {
                let neg: Vec<f64> = grad_t.iter().map(|v| -v).collect();
                let delta = chol_sys.solve(&neg);
                let delta = tangential(&theta, &delta);
                if dot(&delta, &grad_t) < 0.0 {
                    direction = Some(delta);
                }
            }
        }
        let direction = direction.unwrap_or_else(|| grad_t.iter().map(|v| -v).collect());
        let slope = dot(&direction, &grad_t);
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let scaled: Vec<f64> = direction.iter().map(|v| v * step).collect();
            let cand = retract(&theta, &scaled);
            let (cf, cgrad, chess) = eval(&cand);
            if cf <= f + 1e-4 * step * slope + 1e-14 * (1.0 + f.abs()) {
                theta = cand;
                f = cf;
                grad = cgrad;
                hess = chess;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            let residual = norm2(&tangential(&theta, &grad));
            if residual <= 100.0 * PROJECTION_TOL {
                // Line search exhausted by rounding noise this close to
                // stationarity; the point is as converged as f64 allows.
                return Ok(theta);
            }
            return Err(EstimatorError::ProjectionNoConvergence { iters: _iter, residual });
        }
    }
    let residual = norm2(&tangential(&theta, &grad));
    Err(EstimatorError::ProjectionNoConvergence { iters: PROJECTION_MAX_ITER, residual })
}

/// Per-context ellipsoid slack `b * sqrt(x^T V^{-1} x)`.
pub fn uncertainty_width(design: &DesignState, b: f64, x: &[f64]) -> Result<f64, EstimatorError> {
    let chol = Cholesky::new(design.matrix())?;
    Ok(b * chol.inv_quad_form(x).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_context, sample_label, ContextDistribution, GroundTruth};
    use crate::numerics::{min_eigenvalue, RngStream};

    fn random_dataset(n: usize, gt: &GroundTruth, rng: &mut RngStream) -> Vec<LabeledSample> {
        (0..n)
            .map(|_| {
                let x = sample_context(&gt.distribution, rng);
                let y = sample_label(&x, gt, rng);
                LabeledSample { x, y }
            })
            .collect()
    }

    #[test]
    fn empty_sample_set_returns_origin() {
        let theta = fit_mle(&[], None, 3).unwrap();
        assert_eq!(theta, vec![0.0; 3]);
    }

    #[test]
    fn antisymmetric_pair_gives_antisymmetric_scores() {
        let x = vec![0.6, -0.3];
        let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
        let samples = vec![
            LabeledSample { x: x.clone(), y: true },
            LabeledSample { x: neg_x.clone(), y: true },
        ];
        let theta = fit_mle(&samples, None, 2).unwrap();
        let s1 = dot(&x, &theta);
        let s2 = dot(&neg_x, &theta);
        assert!((s1 + s2).abs() < 1e-9, "scores {s1} and {s2} should be antisymmetric");
    }

    #[test]
    fn mle_matches_grid_search_oracle() {
        // Two-stage exhaustive grid over [-3,3]^2: coarse at 1e-2, then 1e-3
        // inside a box around the coarse winner. The objective is strictly
        // concave, so the fine-grid argmax is interior to that box; the test
        // verifies interiority rather than assuming it.
        let gt = GroundTruth::new(vec![0.8, -0.6], ContextDistribution::uniform_ball(2)).unwrap();
        let mut rng = RngStream::new(31);
        let samples = random_dataset(20, &gt, &mut rng);

        let coarse_step = 0.01;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut t0 = -3.0;
        while t0 <= 3.0 + 1e-12 {
            let mut t1 = -3.0;
            while t1 <= 3.0 + 1e-12 {
                let v = regularized_log_likelihood(&[t0, t1], &samples);
                if v > best.0 {
                    best = (v, t0, t1);
                }
                t1 += coarse_step;
            }
            t0 += coarse_step;
        }
        let fine_step = 1e-3;
        let half = 0.05;
        let (lo0, hi0) = (best.1 - half, best.1 + half);
        let (lo1, hi1) = (best.2 - half, best.2 + half);
        let mut fine = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut t0 = lo0;
        while t0 <= hi0 + 1e-12 {
            let mut t1 = lo1;
            while t1 <= hi1 + 1e-12 {
                let v = regularized_log_likelihood(&[t0, t1], &samples);
                if v > fine.0 {
                    fine = (v, t0, t1);
                }
                t1 += fine_step;
            }
            t0 += fine_step;
        }
        assert!(fine.1 > lo0 + fine_step && fine.1 < hi0 - fine_step, "argmax on box edge");
        assert!(fine.2 > lo1 + fine_step && fine.2 < hi1 - fine_step, "argmax on box edge");

        let theta = fit_mle(&samples, None, 2).unwrap();
        assert!((theta[0] - fine.1).abs() <= 2e-3, "{} vs {}", theta[0], fine.1);
        assert!((theta[1] - fine.2).abs() <= 2e-3, "{} vs {}", theta[1], fine.2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(41);
        let gt = GroundTruth::sampled(ContextDistribution::uniform_ball(3), &mut rng);
        for _ in 0..100 {
            let samples = random_dataset(15, &gt, &mut rng);
            let theta: Vec<f64> = (0..3).map(|_| rng.standard_normal() * 0.8).collect();
            let grad = log_likelihood_gradient(&theta, &samples);
            let h = 1e-5;
            for i in 0..3 {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (regularized_log_likelihood(&up, &samples)
                    - regularized_log_likelihood(&dn, &samples))
                    / (2.0 * h);
                let denom = grad[i].abs().max(1.0);
                assert!(
                    ((grad[i] - fd) / denom).abs() <= 1e-5,
                    "component {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn estimator_consistency_at_ten_thousand_samples() {
        for seed in 1..=5 {
            let mut rng = RngStream::new(seed);
            let gt = GroundTruth::sampled(ContextDistribution::uniform_ball(2), &mut rng);
            let samples = random_dataset(10_000, &gt, &mut rng);
            let theta = fit_mle(&samples, None, 2).unwrap();
            let err = norm2(
                &theta.iter().zip(gt.theta_star()).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            assert!(err <= 0.1, "seed {seed}: ||theta_hat - theta*|| = {err}");
        }
    }

    #[test]
    fn confidence_radius_base_case_and_monotonicity() {
        // n = 0 and delta' = 1 kill both logs: B = 2 kappa.
        assert!((confidence_radius(0, 2, 6.0, 1.0) - 12.0).abs() < 1e-12);
        // Frozen from direct evaluation of the formula at
        // kappa = 6, d = 2, delta' = 0.01, n = 100.
        assert!((confidence_radius(100, 2, 6.0, 0.01) - 56.155_335_197_123_925).abs() < 1e-9);
        let mut prev = 0.0;
        for n in [0, 1, 5, 50, 500, 5_000] {
            let b = confidence_radius(n, 2, 6.0, 0.05);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn design_updates_track_min_eigenvalue() {
        let mut design = DesignState::new(2, 6.0);
        assert!((min_eigenvalue(design.matrix()).unwrap() - 6.0).abs() < 1e-12);
        design.update(&[1.0, 0.0]);
        assert!((design.matrix().get(0, 0) - 7.0).abs() < 1e-12);
        assert!((min_eigenvalue(design.matrix()).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(design.n_theta(), 1);
    }

    #[test]
    fn design_eigenvalue_growth_follows_covariance_law() {
        let dist = ContextDistribution::uniform_ball(2);
        let mut rng = RngStream::new(53);
        let mut design = DesignState::new(2, 6.0);
        let mut prev = min_eigenvalue(design.matrix()).unwrap();
        for i in 0..1000 {
            design.update(&sample_context(&dist, &mut rng));
            if i % 100 == 99 {
                let lam = min_eigenvalue(design.matrix()).unwrap();
                assert!(lam >= prev - 1e-10, "eigenvalue decreased");
                prev = lam;
            }
        }
        let lam = min_eigenvalue(design.matrix()).unwrap();
        // (lambda_min(V) - kappa) / n approaches the covariance eigenvalue 1/4.
        assert!(((lam - 6.0) / 1000.0 - 0.25).abs() < 0.03);
    }

    #[test]
    fn projection_noop_inside_ball() {
        let design = DesignState::new(2, 6.0);
        let theta = vec![0.3, -0.2];
        let out = project_theta(&theta, &design, &[]).unwrap();
        assert_eq!(out, theta);
    }

    #[test]
    fn projection_without_samples_is_radial() {
        // With no samples g(theta) = theta and the metric is isotropic, so the
        // minimizer over the ball is theta_hat / ||theta_hat||.
        let design = DesignState::new(2, 6.0);
        let theta_hat = vec![3.0, 4.0];
        let out = project_theta(&theta_hat, &design, &[]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-6 && (out[1] - 0.8).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn projection_matches_disc_grid_search() {
        let gt = GroundTruth::new(vec![1.0, 0.0], ContextDistribution::uniform_ball(2)).unwrap();
        let mut rng = RngStream::new(61);
        let samples = random_dataset(5, &gt, &mut rng);
        let mut design = DesignState::new(2, 6.0);
        for s in &samples {
            design.update(&s.x);
        }
        let theta_hat = vec![1.4, -0.9];
        let chol = Cholesky::new(design.matrix()).unwrap();
        let g_of = |theta: &[f64]| -> Vec<f64> {
            let mut g = theta.to_vec();
            for s in &samples {
                let mu = logistic(dot(&s.x, theta));
                g[0] += mu * s.x[0];
                g[1] += mu * s.x[1];
            }
            g
        };
        let g_target = g_of(&theta_hat);
        let objective = |theta: &[f64]| -> f64 {
            let g = g_of(theta);
            let r: Vec<f64> = g.iter().zip(&g_target).map(|(a, b)| a - b).collect();
            chol.inv_quad_form(&r)
        };
        // Exhaustive scan of the unit disc at 1e-3 resolution.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let step = 1e-3;
        let mut t0 = -1.0;
        while t0 <= 1.0 + 1e-12 {
            let mut t1 = -1.0;
            while t1 <= 1.0 + 1e-12 {
                if t0 * t0 + t1 * t1 <= 1.0 {
                    let v = objective(&[t0, t1]);
                    if v < best.0 {
                        best = (v, t0, t1);
                    }
                }
                t1 += step;
            }
            t0 += step;
        }
        let out = project_theta(&theta_hat, &design, &samples).unwrap();
        assert!(norm2(&out) <= 1.0 + 1e-9);
        assert!((out[0] - best.1).abs() <= 2e-3, "{} vs grid {}", out[0], best.1);
        assert!((out[1] - best.2).abs() <= 2e-3, "{} vs grid {}", out[1], best.2);
    }

    #[test]
    fn uncertainty_width_simple_cases() {
        let design = DesignState::new(2, 1.0);
        // V = I, b = 1, unit x.
        assert!((uncertainty_width(&design, 1.0, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let mut d2 = DesignState::new(2, 1.0);
        // Build V = diag(4, 1) via three unit updates on e1.
        d2.update(&[1.0, 0.0]);
        d2.update(&[1.0, 0.0]);
        d2.update(&[1.0, 0.0]);
        assert!((uncertainty_width(&d2, 2.0, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_width_two_numeric_paths_agree() {
        let mut rng = RngStream::new(71);
        let mut design = DesignState::new(4, 2.0);
        let dist = ContextDistribution::uniform_ball(4);
        for _ in 0..30 {
            design.update(&sample_context(&dist, &mut rng));
        }
        let x = sample_context(&dist, &mut rng);
        let w = uncertainty_width(&design, 1.7, &x).unwrap();
        let v_inv_x = solve_spd(design.matrix(), &x).unwrap();
        let alt = 1.7 * dot(&x, &v_inv_x).sqrt();
        assert!((w - alt).abs() < 1e-9, "{w} vs {alt}");
    }
}
