//! Episode orchestration: environment -> policy -> metrics, seed sweeps,
//! aggregation of safety and excess-test statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrator::{mc_tau_p_star, oracle_tau_p_star, CalibratorError};
use crate::environment::{
    sample_context, sample_label, ContextDistribution, ContextKind, EnvironmentError, GroundTruth,
    RadialProfile,
};
use crate::numerics::{dot, RngStream};
use crate::policies::{Decision, Mode, PolicyError, RefitSchedule, ScoutParams, ScoutState};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Calibrator(#[from] CalibratorError),
}

/// Context distribution choice, in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistributionSpec {
    UniformBall,
    /// Piecewise-constant radial density: (breaks, values).
    Radial { breaks: Vec<f64>, values: Vec<f64> },
}

/// How the latent parameter direction is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaStarSpec {
    /// Uniform on the unit sphere, drawn from the run's stream.
    FromSeed,
    /// A fixed direction, normalized to unit length.
    Explicit(Vec<f64>),
}

/// A fully described experiment. `delta_prime` is derived as `delta / 7`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub delta: f64,
    pub mode: Mode,
    pub distribution: DistributionSpec,
    pub theta_star: ThetaStarSpec,
    pub seeds: Vec<u64>,
    /// Defaults by mode when absent: every round (rigorous), doubling (practical).
    pub refit: Option<RefitSchedule>,
    /// Confidence-radius scale; defaults by mode when absent.
    pub c_b: Option<f64>,
    pub eps_min: f64,
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn new(d: usize, horizon: usize, alpha: f64, delta: f64, seeds: Vec<u64>) -> Self {
        Self {
            d,
            horizon,
            alpha,
            delta,
            mode: Mode::Practical,
            distribution: DistributionSpec::UniformBall,
            theta_star: ThetaStarSpec::FromSeed,
            seeds,
            refit: None,
            c_b: None,
            eps_min: 1e-4,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.d < 1 {
            return err("d must be at least 1".into());
        }
        if self.horizon < 2 {
            return err(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return err(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.seeds.is_empty() {
            return err("seed list must not be empty".into());
        }
        if let Some(cb) = self.c_b {
            if !(cb > 0.0 && cb <= 1.0) {
                return err(format!("c_b must lie in (0, 1], got {cb}"));
            }
        }
        if !(self.eps_min > 0.0 && self.eps_min <= 1.0) {
            return err(format!("eps_min must lie in (0, 1], got {}", self.eps_min));
        }
        if let ThetaStarSpec::Explicit(v) = &self.theta_star {
            if v.len() != self.d {
                return err(format!(
                    "theta_star has dimension {}, config says {}",
                    v.len(),
                    self.d
                ));
            }
        }
        if let DistributionSpec::Radial { breaks, values } = &self.distribution {
            RadialProfile::new(breaks.clone(), values.clone())?;
        }
        Ok(())
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta / 7.0
    }

    pub fn context_distribution(&self) -> Result<ContextDistribution, HarnessError> {
        Ok(match &self.distribution {
            DistributionSpec::UniformBall => ContextDistribution::uniform_ball(self.d),
            DistributionSpec::Radial { breaks, values } => ContextDistribution {
                kind: ContextKind::RadialDensity(RadialProfile::new(
                    breaks.clone(),
                    values.clone(),
                )?),
                d: self.d,
            },
        })
    }

    pub fn scout_params(&self) -> ScoutParams {
        let mut p = ScoutParams::new(self.d, self.alpha, self.delta_prime(), self.mode);
        p.eps_min = self.eps_min;
        if let Some(cb) = self.c_b {
            p.c_b = cb;
        }
        if let Some(r) = self.refit {
            p.refit = r;
        }
        p
    }
}

/// Per-round trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub z: bool,
    pub y: bool,
    pub y_hat: bool,
    /// Score under the estimate in force; 0 during the forced rounds.
    pub score: f64,
    /// Active threshold; +inf while testing is forced or the sentinel holds.
    pub tau: f64,
    pub b: f64,
    pub lambda_min: f64,
    pub n_theta: usize,
    pub n_p: usize,
    pub cum_tests: usize,
    pub cum_errors: usize,
}

/// Sampled point of a run's cumulative curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub cum_tests: usize,
    pub cum_errors: usize,
}

/// Per-run aggregates; every field is re-derivable from the round records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub tests_total: usize,
    pub error_total: usize,
    pub tau_star: f64,
    pub p_star: f64,
    /// `sum Z_t - p* T`.
    pub excess_tests: f64,
    pub max_prefix_error_rate: f64,
    pub safety_satisfied: bool,
    pub first_violation_round: Option<usize>,
    pub curve: Vec<CurvePoint>,
}

/// Everything an inspection hook sees after each round.
pub struct RoundView<'a> {
    pub t: usize,
    pub x: &'a [f64],
    pub y: bool,
    pub decision: &'a Decision,
    /// `<x, theta*>`, which policies never see.
    pub true_score: f64,
    /// State after the round's update.
    pub state: &'a ScoutState,
}

/// The oracle pair (tau*, p*) for a config: analytic for the uniform ball,
/// Monte-Carlo (1e6 draws on a dedicated stream) otherwise.
pub fn oracle_pair(config: &ExperimentConfig) -> Result<(f64, f64), HarnessError> {
    match config.distribution {
        DistributionSpec::UniformBall => {
            let o = oracle_tau_p_star(config.alpha, config.d)?;
            Ok((o.tau_star, o.p_star))
        }
        DistributionSpec::Radial { .. } => {
            let dist = config.context_distribution()?;
            let mut rng = RngStream::with_stream(424_242, 0);
            let gt = GroundTruth::sampled(dist, &mut rng);
            let mc = mc_tau_p_star(&gt, config.alpha, 1_000_000, &mut rng)?;
            Ok((mc.tau_star, mc.p_star))
        }
    }
}

/// Log-spaced checkpoints (about 200) on [10, horizon], always including the
/// quarter point and the horizon itself.
pub fn time_grid(horizon: usize) -> Vec<usize> {
    let lo = 10.min(horizon) as f64;
    let hi = horizon as f64;
    let mut grid: Vec<usize> = (0..200)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / 199.0).exp().round() as usize)
        .collect();
    grid.push(horizon);
    grid.push((horizon / 4).max(1));
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&t| t >= 1 && t <= horizon);
    grid
}

/// Runs one episode, invoking `hook` after every round.
pub fn run_episode_traced<F>(
    config: &ExperimentConfig,
    seed: u64,
    mut hook: F,
) -> Result<(Vec<RoundRecord>, RunSummary), HarnessError>
where
    F: FnMut(&RoundView<'_>),
{
    config.validate()?;
    let dist = config.context_distribution()?;
    let mut rng = RngStream::with_stream(seed, 0);
    let gt = match &config.theta_star {
        ThetaStarSpec::FromSeed => GroundTruth::sampled(dist.clone(), &mut rng),
        ThetaStarSpec::Explicit(v) => GroundTruth::new(v.clone(), dist.clone())?,
    };
    let (tau_star, p_star) = oracle_pair(config)?;

    let mut state = ScoutState::new(config.scout_params());
    let grid = time_grid(config.horizon);
    let mut grid_iter = grid.iter().copied().peekable();

    let mut records = Vec::with_capacity(config.horizon);
    let mut curve = Vec::with_capacity(grid.len());
    let mut cum_tests = 0usize;
    let mut cum_errors = 0usize;
    let mut max_prefix_rate = 0.0f64;
    let mut first_violation = None;

    for t in 1..=config.horizon {
        let x = sample_context(&dist, &mut rng);
        // The label exists regardless of the test decision; drawing it
        // unconditionally also keeps the stream aligned across policies.
        let y = sample_label(&x, &gt, &mut rng);
        let decision = state
            .decide(&x)
            .map_err(|source| HarnessError::Round { round: t, source })?;
        let y_hat = if decision.z { y } else { decision.y_hat.expect("prediction when z = 0") };
        let (score, tau, b, lambda_min) = match (state.theta(), state.bundle()) {
            (Some(est), Some(bundle)) => {
                let theta = match config.mode {
                    Mode::Rigorous => &est.theta_l,
                    Mode::Practical => &est.theta_hat,
                };
                (dot(&x, theta), bundle.tau.as_f64(), bundle.b, bundle.lambda_min)
            }
            _ => (0.0, f64::INFINITY, 0.0, state.design().kappa()),
        };
        state
            .update(&x, &decision, decision.z.then_some(y))
            .map_err(|source| HarnessError::Round { round: t, source })?;

        cum_tests += decision.z as usize;
        cum_errors += (y_hat != y) as usize;
        let prefix_rate = cum_errors as f64 / t as f64;
        if prefix_rate > max_prefix_rate {
            max_prefix_rate = prefix_rate;
        }
        if prefix_rate > config.alpha && first_violation.is_none() {
            first_violation = Some(t);
        }
        records.push(RoundRecord {
            t,
            z: decision.z,
            y,
            y_hat,
            score,
            tau,
            b,
            lambda_min,
            n_theta: state.n_theta(),
            n_p: state.n_p(),
            cum_tests,
            cum_errors,
        });
        while grid_iter.peek() == Some(&t) {
            curve.push(CurvePoint { t, cum_tests, cum_errors });
            grid_iter.next();
        }
        let true_score = dot(&x, gt.theta_star());
        hook(&RoundView { t, x: &x, y, decision: &decision, true_score, state: &state });
    }

    let summary = RunSummary {
        seed,
        tests_total: cum_tests,
        error_total: cum_errors,
        tau_star,
        p_star,
        excess_tests: cum_tests as f64 - p_star * config.horizon as f64,
        max_prefix_error_rate: max_prefix_rate,
        safety_satisfied: first_violation.is_none(),
        first_violation_round: first_violation,
        curve,
    };
    Ok((records, summary))
}

/// Runs one episode and returns the trace and its summary.
pub fn run_episode(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<RoundRecord>, RunSummary), HarnessError> {
    run_episode_traced(config, seed, |_| {})
}

/// Prefix-safety check: true iff the running error rate stays within alpha at
/// every prefix; also reports the first violating round.
pub fn safety_check(records: &[RoundRecord], alpha: f64) -> (bool, Option<usize>) {
    let mut errors = 0usize;
    for r in records {
        errors += (r.y_hat != r.y) as usize;
        if errors as f64 / r.t as f64 > alpha {
            return (false, Some(r.t));
        }
    }
    (true, None)
}

/// Cross-run aggregate: quantile bands of the cumulative test rate, the mean
/// excess-test curve with its log-log slope, and safety tallies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub grid: Vec<usize>,
    pub test_rate_q10: Vec<f64>,
    pub test_rate_q50: Vec<f64>,
    pub test_rate_q90: Vec<f64>,
    pub mean_excess: Vec<f64>,
    /// Least-squares slope of ln(mean excess) vs ln(t) on [horizon/10, horizon];
    /// NaN when fewer than two usable points exist.
    pub excess_slope: f64,
    pub safety_violations: usize,
    pub runs: usize,
    pub p_star: f64,
    pub tau_star: f64,
    pub mean_final_test_rate: f64,
    pub mean_excess_final: f64,
}

/// Lower empirical quantile (type-1) of already-sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn aggregate(summaries: &[RunSummary], horizon: usize) -> AggregateReport {
    assert!(!summaries.is_empty(), "aggregate needs at least one run");
    let grid: Vec<usize> = summaries[0].curve.iter().map(|c| c.t).collect();
    for s in summaries {
        assert!(
            s.curve.len() == grid.len() && s.curve.iter().map(|c| c.t).eq(grid.iter().copied()),
            "runs must share the checkpoint grid"
        );
    }
    let p_star = summaries[0].p_star;
    let tau_star = summaries[0].tau_star;
    let n = summaries.len();

    let mut q10 = Vec::with_capacity(grid.len());
    let mut q50 = Vec::with_capacity(grid.len());
    let mut q90 = Vec::with_capacity(grid.len());
    let mut mean_excess = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let mut rates: Vec<f64> =
            summaries.iter().map(|s| s.curve[k].cum_tests as f64 / t as f64).collect();
        rates.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite rates"));
        q10.push(quantile_sorted(&rates, 0.10));
        q50.push(quantile_sorted(&rates, 0.50));
        q90.push(quantile_sorted(&rates, 0.90));
        let excess: f64 = summaries
            .iter()
            .map(|s| s.curve[k].cum_tests as f64 - p_star * t as f64)
            .sum::<f64>()
            / n as f64;
        mean_excess.push(excess);
    }

    // Slope of ln(mean excess) against ln(t) over the last decade.
    let t_lo = horizon / 10;
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&mean_excess)
        .filter(|(&t, &e)| t >= t_lo && e > 0.0)
        .map(|(&t, &e)| ((t as f64).ln(), e.ln()))
        .collect();
    let excess_slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };

    AggregateReport {
        grid,
        test_rate_q10: q10,
        test_rate_q50: q50,
        test_rate_q90: q90,
        mean_excess,
        excess_slope,
        safety_violations: summaries.iter().filter(|s| !s.safety_satisfied).count(),
        runs: n,
        p_star,
        tau_star,
        mean_final_test_rate: summaries
            .iter()
            .map(|s| s.tests_total as f64 / horizon as f64)
            .sum::<f64>()
            / n as f64,
        mean_excess_final: summaries.iter().map(|s| s.excess_tests).sum::<f64>() / n as f64,
    }
}

/// Runs every seed of the config (in parallel, bounded by `SCOUT_THREADS`),
/// returning summaries in seed order plus the aggregate. Per-seed records are
/// handed to `sink` as they complete, then dropped.
pub fn run_experiment<F>(
    config: &ExperimentConfig,
    mut sink: F,
) -> Result<(Vec<RunSummary>, AggregateReport), HarnessError>
where
    F: FnMut(u64, &[RoundRecord]) -> Result<(), HarnessError>,
{
    config.validate()?;
    let results: Vec<Result<(Vec<RoundRecord>, RunSummary), HarnessError>> = thread_pool()
        .install(|| {
            config
                .seeds
                .par_iter()
                .map(|&seed| run_episode(config, seed))
                .collect()
        });
    let mut summaries = Vec::with_capacity(results.len());
    for (seed, r) in config.seeds.iter().zip(results) {
        let (records, summary) = r?;
        sink(*seed, &records)?;
        summaries.push(summary);
    }
    let report = aggregate(&summaries, config.horizon);
    Ok((summaries, report))
}

/// Pool honoring the `SCOUT_THREADS` cap; falls back to rayon's default.
fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SCOUT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                builder = builder.num_threads(n);
            }
        }
    }
    builder.build().expect("thread pool construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(horizon: usize, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig::new(2, horizon, 0.1, 0.05, seeds)
    }

    #[test]
    fn two_round_episode_tests_everything() {
        let config = tiny_config(2, vec![1]);
        let (records, summary) = run_episode(&config, 1).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.z));
        assert_eq!(summary.error_total, 0);
        assert!(summary.safety_satisfied);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut c = tiny_config(1000, vec![1]);
        c.alpha = 0.7;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1000, vec![1]);
        c.horizon = 1;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1000, vec![1]);
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = tiny_config(1000, vec![1]);
        c.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1000, vec![1]);
        c.c_b = Some(1.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn summary_fields_rederivable_from_records() {
        let config = tiny_config(1000, vec![7]);
        let (records, summary) = run_episode(&config, 7).unwrap();
        assert_eq!(records.len(), 1000);
        let tests: usize = records.iter().filter(|r| r.z).count();
        assert_eq!(summary.tests_total, tests);
        let errors: usize = records.iter().filter(|r| r.y_hat != r.y).count();
        assert_eq!(summary.error_total, errors);
        let mut max_rate = 0.0f64;
        let mut errs = 0usize;
        for r in &records {
            errs += (r.y_hat != r.y) as usize;
            max_rate = max_rate.max(errs as f64 / r.t as f64);
        }
        assert!((summary.max_prefix_error_rate - max_rate).abs() < 1e-15);
        let (safe, first) = safety_check(&records, config.alpha);
        assert_eq!(summary.safety_satisfied, safe);
        assert_eq!(summary.first_violation_round, first);
        // Prefix-sum consistency inside the records themselves.
        let mut ct = 0;
        let mut ce = 0;
        for r in &records {
            ct += r.z as usize;
            ce += (r.y_hat != r.y) as usize;
            assert_eq!(r.cum_tests, ct);
            assert_eq!(r.cum_errors, ce);
        }
        // Regret accounting identity.
        let direct = tests as f64 - summary.p_star * 1000.0;
        assert!((summary.excess_tests - direct).abs() < 1e-9);
    }

    #[test]
    fn boundary_alpha_oracle_never_tests() {
        // alpha at 0.45 exceeds the never-test error, so the oracle pair collapses.
        let mut config = tiny_config(100, vec![1]);
        config.alpha = 0.45;
        let (tau, p) = oracle_pair(&config).unwrap();
        assert_eq!(tau, 0.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn safety_check_flags_first_round_error() {
        let config = tiny_config(50, vec![3]);
        let (mut records, _) = run_episode(&config, 3).unwrap();
        // Corrupt the first prediction.
        records[0].y_hat = !records[0].y;
        let (ok, first) = safety_check(&records, 0.5);
        assert!(!ok);
        assert_eq!(first, Some(1));
    }

    #[test]
    fn identical_seeds_have_zero_spread() {
        let config = tiny_config(300, vec![5, 5, 5]);
        let (summaries, report) = run_experiment(&config, |_, _| Ok(())).unwrap();
        assert_eq!(summaries[0].tests_total, summaries[1].tests_total);
        for k in 0..report.grid.len() {
            assert_eq!(report.test_rate_q10[k], report.test_rate_q90[k]);
        }
    }

    #[test]
    fn single_run_quantiles_equal_the_curve() {
        let config = tiny_config(200, vec![9]);
        let (summaries, report) = run_experiment(&config, |_, _| Ok(())).unwrap();
        for (k, point) in summaries[0].curve.iter().enumerate() {
            let rate = point.cum_tests as f64 / point.t as f64;
            assert_eq!(report.test_rate_q10[k], rate);
            assert_eq!(report.test_rate_q50[k], rate);
            assert_eq!(report.test_rate_q90[k], rate);
        }
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let config = tiny_config(300, vec![1, 2, 3]);
        let (mut summaries, report) = run_experiment(&config, |_, _| Ok(())).unwrap();
        summaries.reverse();
        let report_rev = aggregate(&summaries, 300);
        assert_eq!(report.test_rate_q50, report_rev.test_rate_q50);
        assert_eq!(report.mean_excess, report_rev.mean_excess);
    }

    #[test]
    fn slope_recovery_on_synthetic_sqrt_curves() {
        // 50 synthetic runs with cumulative tests p* t + c sqrt(t) must fit a
        // log-log slope of one half.
        let horizon = 20_000;
        let grid = time_grid(horizon);
        let p_star = 0.6891;
        let summaries: Vec<RunSummary> = (0..50)
            .map(|i| {
                let c = 2.0 + i as f64 * 0.05;
                let curve: Vec<CurvePoint> = grid
                    .iter()
                    .map(|&t| CurvePoint {
                        t,
                        cum_tests: (p_star * t as f64 + c * (t as f64).sqrt()).round() as usize,
                        cum_errors: 0,
                    })
                    .collect();
                RunSummary {
                    seed: i,
                    tests_total: curve.last().unwrap().cum_tests,
                    error_total: 0,
                    tau_star: 0.5747,
                    p_star,
                    excess_tests: 0.0,
                    max_prefix_error_rate: 0.0,
                    safety_satisfied: true,
                    first_violation_round: None,
                    curve,
                }
            })
            .collect();
        let report = aggregate(&summaries, horizon);
        assert!(
            (report.excess_slope - 0.5).abs() <= 0.02,
            "slope {} should be 0.5 +- 0.02",
            report.excess_slope
        );
    }

    #[test]
    fn time_grid_contains_anchors() {
        let grid = time_grid(20_000);
        assert!(grid.contains(&20_000));
        assert!(grid.contains(&5_000));
        assert!(grid.len() >= 150);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
