//! The interaction stream: i.i.d. contexts on the unit ball and Bernoulli
//! labels from a latent logistic model.

use crate::numerics::{
    dot, logistic, min_eigenvalue, norm2, reg_inc_beta, unit_ball_volume, NumericsError,
    RngStream, SymMatrix,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvironmentError {
    #[error("theta_star must be a nonzero vector")]
    ZeroDirection,
    #[error("radial profile is invalid: {0}")]
    BadProfile(&'static str),
    #[error("only {kept} of {needed} conditioned samples survived; increase the sample budget")]
    TooFewConditionedSamples { kept: usize, needed: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Piecewise-constant radial density profile on [0, 1].
///
/// A hook for stressing distributional robustness; the default experiments
/// use the uniform ball. Values are the unnormalized density as a function
/// of the radius; the induced density on the ball stays bounded away from
/// zero and infinity as long as every value is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl RadialProfile {
    /// `breaks` must start at 0, end at 1, strictly increase; `values[i]` is
    /// the density level on `[breaks[i], breaks[i+1])` and must be positive.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, EnvironmentError> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() {
            return Err(EnvironmentError::BadProfile("need k+1 breaks for k values"));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(EnvironmentError::BadProfile("breaks must span [0, 1]"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EnvironmentError::BadProfile("breaks must strictly increase"));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(EnvironmentError::BadProfile("values must be positive and finite"));
        }
        Ok(Self { breaks, values })
    }

    /// Segment masses proportional to the radial probability in dimension d.
    fn segment_masses(&self, d: usize) -> Vec<f64> {
        let p = d as f64;
        self.values
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(&h, w)| h * (w[1].powf(p) - w[0].powf(p)))
            .collect()
    }

    /// Bounds [m, M] of the normalized density over the ball in dimension d.
    pub fn density_bounds(&self, d: usize) -> (f64, f64) {
        let vd = unit_ball_volume(d);
        let z: f64 = self.segment_masses(d).iter().sum::<f64>() * vd;
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(0.0, f64::max);
        (lo / z, hi / z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextKind {
    UniformBall,
    RadialDensity(RadialProfile),
}

/// Context distribution on the d-dimensional unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    pub kind: ContextKind,
    pub d: usize,
}

impl ContextDistribution {
    pub fn uniform_ball(d: usize) -> Self {
        Self { kind: ContextKind::UniformBall, d }
    }

    /// Density bounds [m, M]; for the uniform ball both equal 1 / V_d(1).
    pub fn density_bounds(&self) -> (f64, f64) {
        match &self.kind {
            ContextKind::UniformBall => {
                let m = 1.0 / unit_ball_volume(self.d);
                (m, m)
            }
            ContextKind::RadialDensity(p) => p.density_bounds(self.d),
        }
    }
}

/// The latent truth: a unit-norm parameter vector and the context law.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta_star: Vec<f64>,
    pub distribution: ContextDistribution,
}

impl GroundTruth {
    /// Uses `direction` normalized to unit length.
    pub fn new(direction: Vec<f64>, distribution: ContextDistribution) -> Result<Self, EnvironmentError> {
        assert_eq!(direction.len(), distribution.d, "theta_star dimension mismatch");
        let n = norm2(&direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(EnvironmentError::ZeroDirection);
        }
        let theta_star = direction.iter().map(|v| v / n).collect::<Vec<_>>();
        debug_assert!((norm2(&theta_star) - 1.0).abs() <= 1e-12);
        Ok(Self { theta_star, distribution })
    }

    /// Direction drawn uniformly on the unit sphere.
    pub fn sampled(distribution: ContextDistribution, rng: &mut RngStream) -> Self {
        let d = distribution.d;
        loop {
            let g: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            if norm2(&g) > 1e-12 {
                return Self::new(g, distribution).expect("nonzero direction");
            }
        }
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn d(&self) -> usize {
        self.distribution.d
    }
}

/// One context draw; the returned vector always satisfies ||x|| <= 1.
pub fn sample_context(dist: &ContextDistribution, rng: &mut RngStream) -> Vec<f64> {
    let d = dist.d;
    let radius = match &dist.kind {
        ContextKind::UniformBall => rng.uniform().powf(1.0 / d as f64),
        ContextKind::RadialDensity(profile) => {
            let masses = profile.segment_masses(d);
            let total: f64 = masses.iter().sum();
            let mut u = rng.uniform() * total;
            let mut seg = masses.len() - 1;
            for (i, &m) in masses.iter().enumerate() {
                if u < m {
                    seg = i;
                    break;
                }
                u -= m;
            }
            // Invert the within-segment radial CDF, proportional to r^d.
            let p = d as f64;
            let lo = profile.breaks[seg].powf(p);
            let hi = profile.breaks[seg + 1].powf(p);
            let frac = (u / masses[seg]).clamp(0.0, 1.0);
            (lo + frac * (hi - lo)).powf(1.0 / p)
        }
    };
    let mut x;
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let n = norm2(&g);
        if n > 1e-12 {
            x = g.into_iter().map(|v| v / n * radius).collect::<Vec<f64>>();
            break;
        }
    }
    let n = norm2(&x);
    assert!(n <= 1.0 + 1e-9, "context escaped the unit ball: ||x|| = {n}");
    if n > 1.0 {
        for v in &mut x {
            *v /= n;
        }
    }
    x
}

/// Bernoulli label with success probability `logistic(<x, theta_star>)`.
pub fn sample_label(x: &[f64], gt: &GroundTruth, rng: &mut RngStream) -> bool {
    rng.bernoulli(logistic(dot(x, gt.theta_star())))
}

/// Monte-Carlo estimate of the conditioned covariance eigenvalue together
/// with its analytic lower bound.
#[derive(Debug, Clone)]
pub struct ConditionalEig {
    /// lambda_min of the empirical E[x x^T | |<x, theta*>| <= tau].
    pub estimate: f64,
    /// m tau^{d+2} V_d(1) / (p_tau (d+2)), with p_tau the conditioning mass.
    pub analytic_lower_bound: f64,
    /// Samples that satisfied the conditioning event.
    pub kept: usize,
    /// Crude standard error of the estimate along the minimizing direction.
    pub std_error: f64,
}

/// Estimates lambda_min(E[X X^T | |<X, theta*>| <= tau]) from `n` draws.
pub fn conditional_min_eig_estimate(
    gt: &GroundTruth,
    tau: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<ConditionalEig, EnvironmentError> {
    let d = gt.d();
    assert!(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    assert!(n >= 10 * d * d, "need at least 10 d^2 samples");
    let mut second_moment = SymMatrix::zeros(d);
    let mut kept_samples: Vec<Vec<f64>> = Vec::new();
    let mut kept = 0usize;
    for _ in 0..n {
        let x = sample_context(&gt.distribution, rng);
        if dot(&x, gt.theta_star()).abs() <= tau {
            second_moment.add_outer(&x);
            kept += 1;
            if kept_samples.len() < 200_000 {
                kept_samples.push(x);
            }
        }
    }
    if kept < d + 1 {
        return Err(EnvironmentError::TooFewConditionedSamples { kept, needed: d + 1 });
    }
    // Average the accumulated outer products.
    let inv = 1.0 / kept as f64;
    let rows: Vec<Vec<f64>> =
        (0..d).map(|i| (0..d).map(|j| second_moment.get(i, j) * inv).collect()).collect();
    let scaled = SymMatrix::from_rows(&rows);
    let estimate = min_eigenvalue(&scaled)?;

    // Standard error of v^T x x^T v along an (approximate) minimizing
    // direction, from the retained subsample.
    let v_min = min_direction(&scaled, d);
    let mut mean = 0.0;
    let mut mean_sq = 0.0;
    for x in &kept_samples {
        let q = dot(x, &v_min).powi(2);
        mean += q;
        mean_sq += q * q;
    }
    let m = kept_samples.len() as f64;
    mean /= m;
    mean_sq /= m;
    let std_error = ((mean_sq - mean * mean).max(0.0) / kept as f64).sqrt();

    let (m_lo, _) = gt.distribution.density_bounds();
    let p_tau = match gt.distribution.kind {
        ContextKind::UniformBall => reg_inc_beta(tau * tau, 0.5, (d as f64 + 1.0) / 2.0)?,
        ContextKind::RadialDensity(_) => kept as f64 / n as f64,
    };
    let analytic_lower_bound =
        m_lo * tau.powi(d as i32 + 2) * unit_ball_volume(d) / (p_tau * (d as f64 + 2.0));

    Ok(ConditionalEig { estimate, analytic_lower_bound, kept, std_error })
}

/// Unit direction approximately achieving the minimum of v^T M v.
fn min_direction(m: &SymMatrix, d: usize) -> Vec<f64> {
    // Inverse power iteration with a small shift; M is PD in our uses.
    let mut shifted = m.clone();
    shifted.add_scaled_identity(1e-12);
    let chol = match crate::numerics::Cholesky::new(&shifted) {
        Ok(c) => c,
        Err(_) => return std::iter::once(1.0).chain(std::iter::repeat(0.0)).take(d).collect(),
    };
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    for _ in 0..200 {
        let w = chol.solve(&v);
        let n = norm2(&w);
        if n == 0.0 {
            break;
        }
        v = w.into_iter().map(|c| c / n).collect();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contexts_stay_in_ball() {
        let dist = ContextDistribution::uniform_ball(3);
        let mut rng = RngStream::new(5);
        for _ in 0..10_000 {
            let x = sample_context(&dist, &mut rng);
            assert!(norm2(&x) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn uniform_ball_symmetry_and_radial_mass() {
        let dist = ContextDistribution::uniform_ball(2);
        let mut rng = RngStream::new(17);
        let n = 1_000_000;
        let mut mean = [0.0f64; 2];
        let mut inside_half = 0usize;
        for _ in 0..n {
            let x = sample_context(&dist, &mut rng);
            mean[0] += x[0];
            mean[1] += x[1];
            if norm2(&x) <= 0.5 {
                inside_half += 1;
            }
        }
        // Coordinate means within a 3-sigma CLT band around 0.
        assert!((mean[0] / n as f64).abs() < 0.005);
        assert!((mean[1] / n as f64).abs() < 0.005);
        // P(||x|| <= 1/2) = 1/4 in two dimensions.
        assert!((inside_half as f64 / n as f64 - 0.25).abs() < 0.002);
    }

    #[test]
    fn label_frequency_tracks_logistic() {
        let dist = ContextDistribution::uniform_ball(2);
        let gt = GroundTruth::new(vec![1.0, 0.0], dist).unwrap();
        let mut rng = RngStream::new(23);
        // Context orthogonal to theta*: score 0 ==> P(label) = 1/2.
        let x0 = vec![0.0, 0.9];
        let mut ones = 0;
        for _ in 0..100_000 {
            if sample_label(&x0, &gt, &mut rng) {
                ones += 1;
            }
        }
        assert!((ones as f64 / 1e5 - 0.5).abs() < 0.005);
        // Score exactly 1 ==> P(label) = logistic(1).
        let x1 = vec![1.0, 0.0];
        ones = 0;
        for _ in 0..100_000 {
            if sample_label(&x1, &gt, &mut rng) {
                ones += 1;
            }
        }
        assert!((ones as f64 / 1e5 - 0.731_058_578_6).abs() < 0.005);
    }

    #[test]
    fn replay_is_bit_identical() {
        let dist = ContextDistribution::uniform_ball(4);
        let gt = GroundTruth::sampled(dist.clone(), &mut RngStream::new(99));
        let run = |seed: u64| {
            let mut rng = RngStream::new(seed);
            let mut out = Vec::new();
            for _ in 0..500 {
                let x = sample_context(&dist, &mut rng);
                let y = sample_label(&x, &gt, &mut rng);
                out.push((x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y));
            }
            out
        };
        assert_eq!(run(123), run(123));
    }

    #[test]
    fn conditional_eig_vacuous_conditioning_gives_uniform_value() {
        // tau = 1 conditions on nothing, so the estimate approaches 1/(d+2).
        let dist = ContextDistribution::uniform_ball(2);
        let gt = GroundTruth::sampled(dist, &mut RngStream::new(1));
        let mut rng = RngStream::new(2);
        let ce = conditional_min_eig_estimate(&gt, 1.0, 1_000_000, &mut rng).unwrap();
        assert!((ce.estimate - 0.25).abs() < 0.01, "estimate {}", ce.estimate);
        assert_eq!(ce.kept, 1_000_000);
    }

    #[test]
    fn conditional_eig_dominates_analytic_bound() {
        let dist = ContextDistribution::uniform_ball(2);
        let gt = GroundTruth::sampled(dist, &mut RngStream::new(3));
        let mut rng = RngStream::new(4);
        let ce = conditional_min_eig_estimate(&gt, 0.5, 1_000_000, &mut rng).unwrap();
        // Direction of the bound from the eigenvalue lemma; the estimate must
        // sit above it (up to Monte-Carlo noise).
        assert!(
            ce.estimate >= ce.analytic_lower_bound - 3.0 * ce.std_error,
            "estimate {} vs bound {}",
            ce.estimate,
            ce.analytic_lower_bound
        );
        // For the uniform ball with m = 1/V_d the bound has a closed value.
        let expected = 0.5f64.powi(4) / (reg_inc_beta(0.25, 0.5, 1.5).unwrap() * 4.0);
        assert!((ce.analytic_lower_bound - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_radial_profile_matches_uniform_sampler() {
        // A flat profile must reproduce the uniform-ball draw sequence exactly.
        let profile = RadialProfile::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let flat = ContextDistribution { kind: ContextKind::RadialDensity(profile), d: 3 };
        let uniform = ContextDistribution::uniform_ball(3);
        let mut r1 = RngStream::new(8);
        let mut r2 = RngStream::new(8);
        for _ in 0..200 {
            let a = sample_context(&flat, &mut r1);
            let b = sample_context(&uniform, &mut r2);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_profile_validation() {
        assert!(RadialProfile::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(RadialProfile::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(RadialProfile::new(vec![0.0, 0.5, 0.4, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(RadialProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.0]).is_err());
        let p = RadialProfile::new(vec![0.0, 0.5, 1.0], vec![2.0, 1.0]).unwrap();
        let (m, big_m) = p.density_bounds(2);
        assert!(m > 0.0 && big_m >= m);
    }
}
