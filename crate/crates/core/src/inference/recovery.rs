//! Parameter recovery: simulate agents from the prior, refit them by MAP and
//! correlate true with recovered parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{simulate_participant, AgentParams, ResponsePolicy};
use crate::confidence::{logistic, Condition};
use crate::datastore::TrialRecord;
use crate::error::{Error, Result};
use crate::inference::map::{fit_map, FitOptions};
use crate::inference::model::HyperParams;
use crate::rng::{self, StreamKind};
use crate::stats::pearson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub n_agents: usize,
    /// Trial counts to fit. Every agent is simulated once at the largest count
    /// and shorter fits use a prefix of the same session.
    pub trial_counts: Vec<u32>,
    pub seed: u64,
    pub restarts: usize,
    pub hyper: HyperParams,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            n_agents: 200,
            trial_counts: vec![50, 200],
            seed: 0,
            restarts: FitOptions::default().restarts,
            hyper: HyperParams::prior_means(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecovery {
    pub parameter: String,
    /// Pearson correlation; `None` when either side has no variance. Rates
    /// are correlated on the logit scale.
    pub correlation: Option<f64>,
    pub true_values: Vec<f64>,
    pub recovered_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryLevel {
    pub n_trials: u32,
    pub parameters: Vec<ParameterRecovery>,
    pub n_converged: usize,
}

impl RecoveryLevel {
    pub fn correlation(&self, parameter: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.parameter == parameter).and_then(|p| p.correlation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n_agents: usize,
    pub seed: u64,
    pub levels: Vec<RecoveryLevel>,
}

/// Draws one agent from the participant-level prior under `hyper`.
pub fn draw_agent<R: Rng + ?Sized>(hyper: &HyperParams, condition: Condition, rng: &mut R) -> AgentParams {
    let c = condition.index();
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    let b0 = hyper.mu_b0 + hyper.sigma_b0 * z();
    let w0 = hyper.mu_w0 + hyper.sigma_w0 * z();
    let rate = |f: usize, z: f64| logistic(hyper.mu_alpha[c][f] + hyper.sigma_alpha[c][f] * z);
    let rates = [z(), z(), z(), z()];
    AgentParams {
        b0,
        w0,
        alpha_b_correct: rate(0, rates[0]),
        alpha_b_wrong: rate(1, rates[1]),
        alpha_w_correct: rate(2, rates[2]),
        alpha_w_wrong: rate(3, rates[3]),
    }
}

fn to_fit_scale(params: &AgentParams) -> [f64; 6] {
    let a = params.to_array();
    let lg = |p: f64| (p / (1.0 - p)).ln();
    [a[0], a[1], lg(a[2]), lg(a[3]), lg(a[4]), lg(a[5])]
}

/// Runs the recovery study. Agents cycle through the four conditions and
/// respond by probability matching.
pub fn run_recovery(config: &RecoveryConfig) -> Result<RecoveryReport> {
    if config.n_agents < 3 {
        return Err(Error::InvalidParameter(format!("recovery needs at least 3 agents, got {}", config.n_agents)));
    }
    if config.trial_counts.is_empty() || config.trial_counts.contains(&0) {
        return Err(Error::InvalidParameter("trial counts must be non-empty and positive".into()));
    }
    config.hyper.validate()?;
    let max_trials = *config.trial_counts.iter().max().expect("non-empty");

    type AgentResult = (AgentParams, Vec<(AgentParams, bool)>);
    let agents: Vec<AgentResult> = (0..config.n_agents)
        .into_par_iter()
        .map(|i| -> Result<AgentResult> {
            let condition = Condition::ALL[i % 4];
            let mut rng = rng::stream(config.seed, StreamKind::Cohort, i as u64);
            let truth = draw_agent(&config.hyper, condition, &mut rng);
            let id = format!("r{:04}", i + 1);
            let records: Vec<TrialRecord> =
                simulate_participant(&id, &truth, &condition.spec(), max_trials, &ResponsePolicy::ProbabilityMatch, &mut rng)
                    .into_iter()
                    .map(|s| s.record)
                    .collect();
            let fits = config
                .trial_counts
                .iter()
                .map(|&n| {
                    let options = FitOptions {
                        restarts: config.restarts,
                        seed: config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                        hyper: config.hyper.clone(),
                        ..FitOptions::default()
                    };
                    let fit = fit_map(&records[..n as usize], &config.hyper, condition, &options)?;
                    Ok((fit.params, fit.converged))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((truth, fits))
        })
        .collect::<Result<Vec<_>>>()?;

    let levels = config
        .trial_counts
        .iter()
        .enumerate()
        .map(|(level, &n_trials)| {
            let parameters = AgentParams::NAMES
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let true_values: Vec<f64> = agents.iter().map(|(t, _)| to_fit_scale(t)[k]).collect();
                    let recovered_values: Vec<f64> = agents.iter().map(|(_, f)| to_fit_scale(&f[level].0)[k]).collect();
                    ParameterRecovery {
                        parameter: name.to_string(),
                        correlation: pearson(&true_values, &recovered_values),
                        true_values,
                        recovered_values,
                    }
                })
                .collect();
            let n_converged = agents.iter().filter(|(_, f)| f[level].1).count();
            RecoveryLevel { n_trials, parameters, n_converged }
        })
        .collect();
    Ok(RecoveryReport { n_agents: config.n_agents, seed: config.seed, levels })
}
