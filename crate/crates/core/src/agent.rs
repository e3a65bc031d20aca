//! Linear-in-log-odds perception of AI confidence with Rescorla-Wagner
//! updating of its intercept (baseline trust) and slope (confidence
//! sensitivity).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{clamped_logit, logistic, sample_trial, ConditionSpec};
use crate::datastore::{SimulatedTrial, TrialRecord};
use crate::error::{Error, Result};

/// The six per-participant parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub b0: f64,
    pub w0: f64,
    pub alpha_b_correct: f64,
    pub alpha_b_wrong: f64,
    pub alpha_w_correct: f64,
    pub alpha_w_wrong: f64,
}

impl AgentParams {
    /// Names of the parameters in [`AgentParams::to_array`] order.
    pub const NAMES: [&'static str; 6] =
        ["b0", "w0", "alpha_b_correct", "alpha_b_wrong", "alpha_w_correct", "alpha_w_wrong"];

    /// Initial values with the same learning rate for every family.
    pub fn uniform_rates(b0: f64, w0: f64, alpha: f64) -> Self {
        AgentParams {
            b0,
            w0,
            alpha_b_correct: alpha,
            alpha_b_wrong: alpha,
            alpha_w_correct: alpha,
            alpha_w_wrong: alpha,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.b0, self.w0, self.alpha_b_correct, self.alpha_b_wrong, self.alpha_w_correct, self.alpha_w_wrong]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        AgentParams {
            b0: a[0],
            w0: a[1],
            alpha_b_correct: a[2],
            alpha_b_wrong: a[3],
            alpha_w_correct: a[4],
            alpha_w_wrong: a[5],
        }
    }

    pub fn rates(&self) -> [f64; 4] {
        [self.alpha_b_correct, self.alpha_b_wrong, self.alpha_w_correct, self.alpha_w_wrong]
    }

    /// Checks the fitted-parameter invariants: finite intercept and slope,
    /// learning rates strictly inside (0, 1).
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// Like [`validate`](Self::validate) but admits rates of exactly 0 or 1,
    /// which the update rule handles and simulation may want.
    pub fn validate_for_simulation(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, closed: bool) -> Result<()> {
        if !self.b0.is_finite() || !self.w0.is_finite() {
            return Err(Error::InvalidParameter("b0 and w0 must be finite".into()));
        }
        for (name, a) in Self::NAMES[2..].iter().zip(self.rates()) {
            let inside = if closed { (0.0..=1.0).contains(&a) } else { a > 0.0 && a < 1.0 };
            if !inside {
                let interval = if closed { "[0,1]" } else { "(0,1)" };
                return Err(Error::InvalidParameter(format!("{name} must lie in {interval}, got {a}")));
            }
        }
        Ok(())
    }

    fn rate_b(&self, ai_correct: bool) -> f64 {
        if ai_correct {
            self.alpha_b_correct
        } else {
            self.alpha_b_wrong
        }
    }

    fn rate_w(&self, ai_correct: bool) -> f64 {
        if ai_correct {
            self.alpha_w_correct
        } else {
            self.alpha_w_wrong
        }
    }

    pub fn initial_state(&self) -> AgentState {
        AgentState { b: self.b0, w: self.w0, trial_index: 0 }
    }
}

/// Evolving intercept and slope of the perception curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub b: f64,
    pub w: f64,
    /// Number of updates applied so far.
    pub trial_index: u32,
}

/// Perceived AI accuracy for displayed confidence `c` (clamped to [0.05, 0.95]).
pub fn perceive(state: &AgentState, c: f64) -> f64 {
    logistic(state.b + state.w * clamped_logit(c))
}

/// Applies one learning step after observing whether the AI was correct.
pub fn update(state: &AgentState, params: &AgentParams, c: f64, ai_correct: bool) -> AgentState {
    let x = clamped_logit(c);
    let v = logistic(state.b + state.w * x);
    let delta = f64::from(u8::from(ai_correct)) - v;
    AgentState {
        b: state.b + params.rate_b(ai_correct) * delta,
        w: state.w + params.rate_w(ai_correct) * delta * x,
        trial_index: state.trial_index + 1,
    }
}

/// How a simulated agent turns perceived accuracy into a judgment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponsePolicy {
    /// Judge "correct" with probability v.
    #[default]
    ProbabilityMatch,
    /// Judge "correct" when v >= threshold.
    Threshold { threshold: f64 },
}

impl ResponsePolicy {
    pub fn threshold(threshold: f64) -> Result<Self> {
        if threshold > 0.0 && threshold < 1.0 {
            Ok(ResponsePolicy::Threshold { threshold })
        } else {
            Err(Error::InvalidParameter(format!("threshold must lie in (0,1), got {threshold}")))
        }
    }
}

/// Draws a judgment ("AI was correct" = true) for perceived accuracy `v`.
pub fn respond<R: Rng + ?Sized>(v: f64, policy: &ResponsePolicy, rng: &mut R) -> bool {
    match *policy {
        ResponsePolicy::ProbabilityMatch => rng.random::<f64>() < v,
        ResponsePolicy::Threshold { threshold } => v >= threshold,
    }
}

/// Runs an agent through `n_trials` fresh stimuli, updating after every trial.
pub fn simulate_participant<R: Rng + ?Sized>(
    participant_id: &str,
    params: &AgentParams,
    spec: &ConditionSpec,
    n_trials: u32,
    policy: &ResponsePolicy,
    rng: &mut R,
) -> Vec<SimulatedTrial> {
    let mut state = params.initial_state();
    let mut out = Vec::with_capacity(n_trials as usize);
    for t in 1..=n_trials {
        let stimulus = sample_trial(spec, rng);
        let c = stimulus.confidence_displayed;
        let v = perceive(&state, c);
        let judged = respond(v, policy, rng);
        out.push(SimulatedTrial {
            record: TrialRecord::new(participant_id, spec.label, t, c, stimulus.ai_correct, judged),
            confidence_raw: stimulus.confidence_raw,
            v,
            b: state.b,
            w: state.w,
        });
        state = update(&state, params, c, stimulus.ai_correct);
    }
    out
}

/// Replays the update rule over recorded trials; returns `n + 1` states
/// (the initial one followed by the state after each trial).
pub fn trajectory(params: &AgentParams, records: &[TrialRecord]) -> Result<Vec<AgentState>> {
    let mut states = Vec::with_capacity(records.len() + 1);
    let mut state = params.initial_state();
    states.push(state);
    let mut previous = 0;
    for r in records {
        if r.trial_index <= previous {
            return Err(Error::OutOfOrder { previous, found: r.trial_index });
        }
        previous = r.trial_index;
        state = update(&state, params, r.ai_confidence, r.ai_correct);
        states.push(state);
    }
    Ok(states)
}
