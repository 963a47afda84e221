//! Decision-makers: the adaptive tester with its two operating modes, the
//! fixed-threshold oracle baseline, and the in-expectation hindsight optimum
//! (fractional knapsack).

use crate::calibrator::{
    alpha_schedule, assemble_tau, eps_q_at, tau_star_quantized, zeta, CalibratorError,
    EmpiricalDistribution, Threshold, ThresholdBundle,
};
use crate::estimator::{
    confidence_radius, fit_mle, project_theta, uncertainty_width, DesignState, EstimatorError,
    LabeledSample, ThetaEstimate,
};
use crate::numerics::{dot, min_eigenvalue, NumericsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("label presence (provided = {provided}) does not match the test decision")]
    LabelPresenceMismatch { provided: bool },
    #[error("no parameter estimate is available at round {t}")]
    MissingEstimate { t: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Calibrator(#[from] CalibratorError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Operating mode: `Rigorous` runs the fully inflated threshold assembly and
/// refits every round; `Practical` uses the simplified testing condition with
/// batched refits and no projection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Rigorous,
    Practical,
}

/// When the parameter and threshold estimates are recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RefitSchedule {
    EveryRound,
    /// Refit when entering rounds 3, 4, 8, 16, 32, ...; cached in between.
    Doubling,
}

/// Default confidence-radius scale in practical mode; rigorous mode keeps the
/// full constant. Chosen so the width term covers the observed estimation
/// error while the excess test rate still converges at desk scales.
pub const DEFAULT_PRACTICAL_CB: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct ScoutParams {
    pub d: usize,
    pub alpha: f64,
    pub delta_prime: f64,
    pub kappa: f64,
    pub c_b: f64,
    pub eps_min: f64,
    pub mode: Mode,
    pub refit: RefitSchedule,
}

impl ScoutParams {
    pub fn new(d: usize, alpha: f64, delta_prime: f64, mode: Mode) -> Self {
        Self {
            d,
            alpha,
            delta_prime,
            kappa: 6.0,
            c_b: match mode {
                Mode::Rigorous => 1.0,
                Mode::Practical => DEFAULT_PRACTICAL_CB,
            },
            eps_min: 1e-4,
            mode,
            refit: match mode {
                Mode::Rigorous => RefitSchedule::EveryRound,
                Mode::Practical => RefitSchedule::Doubling,
            },
        }
    }
}

/// Why a test decision came out the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Rounds 1 and 2 always test.
    Forced,
    /// The threshold rule fired (in either direction).
    Threshold,
    /// The cached threshold was the always-test sentinel.
    AlwaysTestSentinel,
}

/// One round's decision. When `z` is true the final prediction is the
/// observed label; `y_hat` carries the committed prediction otherwise.
/// `model_prediction` is the sign prediction the current estimate would have
/// made regardless, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub z: bool,
    pub y_hat: Option<bool>,
    pub model_prediction: Option<bool>,
    pub provenance: Provenance,
}

/// All mutable state of one policy run.
///
/// Sample splitting keeps the two estimates independent: odd rounds feed the
/// context set, even tested rounds feed the labeled set and the design
/// matrix. One run owns one state; nothing here is shared.
#[derive(Debug, Clone)]
pub struct ScoutState {
    params: ScoutParams,
    design: DesignState,
    theta: Option<ThetaEstimate>,
    bundle: Option<ThresholdBundle>,
    s_theta: Vec<LabeledSample>,
    s_p: EmpiricalDistribution,
    t: usize,
}

impl ScoutState {
    pub fn new(params: ScoutParams) -> Self {
        let design = DesignState::new(params.d, params.kappa);
        Self {
            params,
            design,
            theta: None,
            bundle: None,
            s_theta: Vec::new(),
            s_p: EmpiricalDistribution::new(),
            t: 1,
        }
    }

    /// The 1-based index of the round about to be decided.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n_theta(&self) -> usize {
        self.design.n_theta()
    }

    pub fn n_p(&self) -> usize {
        self.s_p.len()
    }

    pub fn params(&self) -> &ScoutParams {
        &self.params
    }

    pub fn theta(&self) -> Option<&ThetaEstimate> {
        self.theta.as_ref()
    }

    pub fn bundle(&self) -> Option<&ThresholdBundle> {
        self.bundle.as_ref()
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    /// Test-or-predict decision for the incoming context.
    pub fn decide(&self, x: &[f64]) -> Result<Decision, PolicyError> {
        if self.t <= 2 {
            return Ok(Decision {
                z: true,
                y_hat: None,
                model_prediction: None,
                provenance: Provenance::Forced,
            });
        }
        let theta = self.theta.as_ref().ok_or(PolicyError::MissingEstimate { t: self.t })?;
        let bundle = self.bundle.as_ref().ok_or(PolicyError::MissingEstimate { t: self.t })?;
        let (score, z, provenance) = match self.params.mode {
            Mode::Rigorous => {
                let score = dot(x, &theta.theta_l);
                match bundle.tau {
                    Threshold::AlwaysTest => (score, true, Provenance::AlwaysTestSentinel),
                    Threshold::Value(tau) => {
                        (score, score.abs() <= tau, Provenance::Threshold)
                    }
                }
            }
            Mode::Practical => {
                let score = dot(x, &theta.theta_hat);
                match bundle.tau {
                    Threshold::AlwaysTest => (score, true, Provenance::AlwaysTestSentinel),
                    Threshold::Value(tau) => {
                        let width = uncertainty_width(&self.design, bundle.b, x)?;
                        (score, score.abs() <= tau + width, Provenance::Threshold)
                    }
                }
            }
        };
        let model_prediction = Some(score > 0.0);
        Ok(Decision {
            z,
            y_hat: if z { None } else { model_prediction },
            model_prediction,
            provenance,
        })
    }

    /// Folds the round's outcome into the state and refits on schedule.
    /// `observed_label` must be present exactly when the decision tested.
    pub fn update(
        &mut self,
        x: &[f64],
        decision: &Decision,
        observed_label: Option<bool>,
    ) -> Result<(), PolicyError> {
        if observed_label.is_some() != decision.z {
            return Err(PolicyError::LabelPresenceMismatch { provided: observed_label.is_some() });
        }
        let t = self.t;
        if t % 2 == 1 {
            self.s_p.push(x.to_vec())?;
        } else if decision.z {
            let y = observed_label.expect("checked above");
            self.s_theta.push(LabeledSample { x: x.to_vec(), y });
            self.design.update(x);
        }
        self.t = t + 1;
        if self.t >= 3 && self.refit_due(self.t) {
            self.refit()?;
        }
        Ok(())
    }

    fn refit_due(&self, t_next: usize) -> bool {
        match self.params.refit {
            RefitSchedule::EveryRound => true,
            // The first estimate must exist when round 3 is decided; after
            // that, checkpoints double.
            RefitSchedule::Doubling => t_next == 3 || (t_next >= 4 && t_next.is_power_of_two()),
        }
    }

    fn refit(&mut self) -> Result<(), PolicyError> {
        let warm = self.theta.as_ref().map(|e| e.theta_hat.clone());
        let theta_hat = fit_mle(&self.s_theta, warm.as_deref(), self.params.d)?;
        let theta_l = match self.params.mode {
            Mode::Rigorous => project_theta(&theta_hat, &self.design, &self.s_theta)?,
            Mode::Practical => theta_hat.clone(),
        };
        let b = self.params.c_b
            * confidence_radius(
                self.design.n_theta(),
                self.params.d,
                self.params.kappa,
                self.params.delta_prime,
            );
        let bundle = match self.params.mode {
            Mode::Rigorous => assemble_tau(
                &theta_l,
                &self.s_p,
                &self.design,
                b,
                self.t,
                self.params.alpha,
                self.params.delta_prime,
                self.params.eps_min,
            )?,
            Mode::Practical => {
                // Simplified testing condition. While the scheduled budget is
                // clamped at zero the policy keeps testing; early prefixes
                // have no error slack, and one wrong prediction at round ten
                // already busts the budget. Once the clamp lifts, the
                // remaining inflations collapse into the plug-in threshold at
                // the full budget plus the per-context width added at
                // decision time.
                let eps_q = eps_q_at(self.t, self.params.eps_min);
                let alpha_t = alpha_schedule(self.t, self.params.alpha, self.params.delta_prime);
                let tau = if alpha_t == 0.0 {
                    Threshold::AlwaysTest
                } else {
                    tau_star_quantized(&theta_hat, &self.s_p, self.params.alpha, eps_q)?
                };
                let lambda_min = min_eigenvalue(self.design.matrix())?;
                ThresholdBundle {
                    tau,
                    alpha_t,
                    zeta_t: zeta(self.t, self.params.d, eps_q, self.params.delta_prime),
                    eps_q,
                    b,
                    lambda_min,
                    b_over_sqrt_lambda: b / lambda_min.sqrt(),
                }
            }
        };
        self.theta = Some(ThetaEstimate { theta_hat, theta_l, b });
        self.bundle = Some(bundle);
        Ok(())
    }

    /// Order-sensitive hash of the full mutable state, for replay checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.t as u64);
        h.write_u64(self.design.n_theta() as u64);
        h.write_u64(self.s_p.len() as u64);
        for i in 0..self.params.d {
            for j in 0..self.params.d {
                h.write_f64(self.design.matrix().get(i, j));
            }
        }
        if let Some(est) = &self.theta {
            for v in est.theta_hat.iter().chain(&est.theta_l) {
                h.write_f64(*v);
            }
            h.write_f64(est.b);
        }
        if let Some(b) = &self.bundle {
            h.write_f64(b.tau.as_f64());
            h.write_f64(b.alpha_t);
            h.write_f64(b.zeta_t);
            h.write_f64(b.eps_q);
            h.write_f64(b.lambda_min);
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write_u64(&mut self, v: u64) {
        for byte in v.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// The fixed-threshold baseline that knows the true parameter: test when
/// `|<x, theta*>| <= tau` (ties test), otherwise predict by sign.
pub fn oracle_decide(x: &[f64], theta_star: &[f64], tau_star: f64) -> Decision {
    let score = dot(x, theta_star);
    let z = score.abs() <= tau_star;
    Decision {
        z,
        y_hat: if z { None } else { Some(score > tau_star) },
        model_prediction: Some(score > 0.0),
        provenance: Provenance::Threshold,
    }
}

/// Hindsight in-expectation optimum for a known score sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackPlan {
    /// `T - sum eta_t`: the expected number of tests of the optimal plan.
    pub expected_tests: f64,
    /// Per-round skip probabilities `eta_t` in the original order.
    pub plan: Vec<f64>,
}

/// Greedy solution of the fractional knapsack relaxation: skipping round `t`
/// costs `min(p_t, 1 - p_t)` expected errors; fill the cheapest rounds with
/// `eta = 1` until the budget `alpha T` binds, fractional at the boundary.
pub fn knapsack_hindsight(label_probs: &[f64], alpha: f64) -> KnapsackPlan {
    assert!(alpha >= 0.0);
    let t = label_probs.len();
    let mut order: Vec<usize> = (0..t).collect();
    let cost = |i: usize| label_probs[i].min(1.0 - label_probs[i]);
    order.sort_by(|&a, &b| {
        cost(a).partial_cmp(&cost(b)).expect("finite costs").then(a.cmp(&b))
    });
    let budget = alpha * t as f64;
    let mut plan = vec![0.0; t];
    let mut spent = 0.0;
    for &i in &order {
        let c = cost(i);
        if spent + c <= budget {
            plan[i] = 1.0;
            spent += c;
        } else {
            if c > 0.0 {
                let frac = ((budget - spent) / c).clamp(0.0, 1.0);
                plan[i] = frac;
            }
            break;
        }
    }
    let skipped: f64 = plan.iter().sum();
    KnapsackPlan { expected_tests: t as f64 - skipped, plan }
}
