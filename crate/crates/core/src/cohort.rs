//! Learning-rate presets and cohort simulation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{simulate_participant, AgentParams, ResponsePolicy};
use crate::confidence::Condition;
use crate::datastore::SimulatedTrial;
use crate::error::{Error, Result};
use crate::inference::model::HyperParams;
use crate::inference::recovery::draw_agent;
use crate::rng::{self, StreamKind};

/// Initial baseline trust and confidence sensitivity shared by the presets.
pub const PRESET_B0: f64 = 0.60;
pub const PRESET_W0: f64 = 0.69;

/// Named learning-rate settings taken from group-level estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePreset {
    Standard,
    Overconfidence,
    Underconfidence,
    ReverseLearner,
    ReverseNonLearner,
}

impl RatePreset {
    pub const ALL: [RatePreset; 5] = [
        RatePreset::Standard,
        RatePreset::Overconfidence,
        RatePreset::Underconfidence,
        RatePreset::ReverseLearner,
        RatePreset::ReverseNonLearner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RatePreset::Standard => "standard",
            RatePreset::Overconfidence => "overconfidence",
            RatePreset::Underconfidence => "underconfidence",
            RatePreset::ReverseLearner => "reverse_learner",
            RatePreset::ReverseNonLearner => "reverse_non_learner",
        }
    }

    pub fn condition(self) -> Condition {
        match self {
            RatePreset::Standard => Condition::Standard,
            RatePreset::Overconfidence => Condition::Overconfidence,
            RatePreset::Underconfidence => Condition::Underconfidence,
            RatePreset::ReverseLearner | RatePreset::ReverseNonLearner => Condition::Reverse,
        }
    }

    /// Parameters as `(b0, w0, alpha_b_correct, alpha_b_wrong, alpha_w_correct, alpha_w_wrong)`.
    pub fn params(self) -> AgentParams {
        let (ab, aw) = match self {
            RatePreset::Standard => ((0.18, 0.18), (0.30, 0.30)),
            RatePreset::Overconfidence => ((0.29, 0.46), (0.55, 0.05)),
            RatePreset::Underconfidence => ((0.51, 0.14), (0.04, 0.49)),
            RatePreset::ReverseLearner => ((0.18, 0.18), (0.14, 0.50)),
            RatePreset::ReverseNonLearner => ((0.18, 0.18), (0.04, 0.015)),
        };
        AgentParams {
            b0: PRESET_B0,
            w0: PRESET_W0,
            alpha_b_correct: ab.0,
            alpha_b_wrong: ab.1,
            alpha_w_correct: aw.0,
            alpha_w_wrong: aw.1,
        }
    }
}

impl fmt::Display for RatePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RatePreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown rate preset `{s}`")))
    }
}

/// Group-level settings used to draw synthetic participants when no explicit
/// parameters are given: b0 ~ N(0.60, 0.56), w0 ~ N(0.69, 1.8) and
/// logit(alpha) ~ N(-1.5, 1) in every condition.
pub fn simulation_hyper() -> HyperParams {
    HyperParams { mu_b0: 0.60, sigma_b0: 0.56, mu_w0: 0.69, sigma_w0: 1.8, ..HyperParams::prior_means() }
}

/// How each synthetic participant's parameters are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSource {
    Fixed(AgentParams),
    Prior(HyperParams),
}

/// Participant id of the `i`-th (0-based) synthetic agent.
pub fn agent_id(i: usize) -> String {
    format!("sim{:04}", i + 1)
}

/// Simulates `n_agents` participants, each on its own random stream, and
/// returns their trials concatenated in agent order.
pub fn simulate_cohort(
    source: &AgentSource,
    condition: Condition,
    n_agents: usize,
    n_trials: u32,
    policy: &ResponsePolicy,
    seed: u64,
) -> Result<Vec<SimulatedTrial>> {
    if n_agents == 0 || n_trials == 0 {
        return Err(Error::InvalidParameter("agent and trial counts must be positive".into()));
    }
    match source {
        AgentSource::Fixed(p) => p.validate_for_simulation()?,
        AgentSource::Prior(h) => h.validate()?,
    }
    let spec = condition.spec();
    let per_agent: Vec<Vec<SimulatedTrial>> = (0..n_agents)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, StreamKind::Agent, i as u64);
            let params = match source {
                AgentSource::Fixed(p) => *p,
                AgentSource::Prior(h) => draw_agent(h, condition, &mut rng),
            };
            simulate_participant(&agent_id(i), &params, &spec, n_trials, policy, &mut rng)
        })
        .collect();
    Ok(per_agent.into_iter().flatten().collect())
}
