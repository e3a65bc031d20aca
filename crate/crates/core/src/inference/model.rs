//! Likelihood and hierarchical priors of the trust-learning model.
//!
//! Per participant `i` in condition `c`:
//!
//! ```text
//! y_t ~ Bernoulli(v_t),  v_t = logistic(b_t + w_t * logit(c_t))
//! b0_i ~ N(mu_b0, sigma_b0)          mu_b0 ~ N(0, 1)      sigma_b0 ~ Exp(1)
//! w0_i ~ N(mu_w0, sigma_w0)          mu_w0 ~ N(0, 1)      sigma_w0 ~ Exp(1)
//! logit(alpha_{r,i}) ~ N(mu_{c,r}, sigma_{c,r})
//!                                    mu_{c,r} ~ N(-1.5, 1.5)  sigma_{c,r} ~ Exp(1)
//! ```
//!
//! for the four rate families `r`. Learning-rate densities are evaluated on
//! the logit scale, which is where the sampler works.

use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::confidence::{clamped_logit, logistic, Condition};
use crate::datastore::{group_by_participant, TrialRecord};
use crate::error::{Error, Result};
use crate::metrics::PROBABILITY_FLOOR;
use crate::stats::normal_log_density;

/// Hyper-prior constants.
pub const MU_INIT_PRIOR: (f64, f64) = (0.0, 1.0);
pub const MU_ALPHA_PRIOR: (f64, f64) = (-1.5, 1.5);
pub const SIGMA_PRIOR_RATE: f64 = 1.0;

/// The four learning-rate families, in [`AgentParams`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFamily {
    BCorrect,
    BWrong,
    WCorrect,
    WWrong,
}

impl RateFamily {
    pub const ALL: [RateFamily; 4] = [RateFamily::BCorrect, RateFamily::BWrong, RateFamily::WCorrect, RateFamily::WWrong];

    pub fn param_name(self) -> &'static str {
        AgentParams::NAMES[2 + self as usize]
    }
}

/// Group-level parameters. Learning-rate hypers are indexed
/// `[condition][family]` and live on the logit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub mu_b0: f64,
    pub sigma_b0: f64,
    pub mu_w0: f64,
    pub sigma_w0: f64,
    pub mu_alpha: [[f64; 4]; 4],
    pub sigma_alpha: [[f64; 4]; 4],
}

impl HyperParams {
    /// Prior means of every hyperparameter (sigma at the Exp(1) mean).
    pub fn prior_means() -> Self {
        HyperParams {
            mu_b0: MU_INIT_PRIOR.0,
            sigma_b0: 1.0 / SIGMA_PRIOR_RATE,
            mu_w0: MU_INIT_PRIOR.0,
            sigma_w0: 1.0 / SIGMA_PRIOR_RATE,
            mu_alpha: [[MU_ALPHA_PRIOR.0; 4]; 4],
            sigma_alpha: [[1.0 / SIGMA_PRIOR_RATE; 4]; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma_b0, self.sigma_w0].into_iter().chain(self.sigma_alpha.iter().flatten().copied());
        for s in sigmas {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("scale parameters must be positive, got {s}")));
            }
        }
        let locs = [self.mu_b0, self.mu_w0].into_iter().chain(self.mu_alpha.iter().flatten().copied());
        if locs.into_iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("location parameters must be finite".into()));
        }
        Ok(())
    }
}

/// One trial reduced to what the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Logit of the clamped displayed confidence.
    pub x: f64,
    pub ai_correct: bool,
    pub judged_correct: bool,
}

impl From<&TrialRecord> for Observation {
    fn from(r: &TrialRecord) -> Self {
        Observation { x: clamped_logit(r.ai_confidence), ai_correct: r.ai_correct, judged_correct: r.human_judged_correct }
    }
}

/// One participant's trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantData {
    pub id: String,
    pub condition: Condition,
    pub records: Vec<TrialRecord>,
    pub observations: Vec<Observation>,
}

/// Trials grouped by participant, sorted by participant id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub participants: Vec<ParticipantData>,
}

impl Dataset {
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        let participants = group_by_participant(records)
            .into_iter()
            .map(|(id, records)| {
                let condition = records[0].condition;
                if records.iter().any(|r| r.condition != condition) {
                    return Err(Error::Mismatch(format!("participant {id} appears under more than one condition")));
                }
                let observations = records.iter().map(Observation::from).collect();
                Ok(ParticipantData { id, condition, records, observations })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { participants })
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    /// Conditions that have at least one participant, in canonical order.
    pub fn conditions(&self) -> Vec<Condition> {
        Condition::ALL.into_iter().filter(|c| self.participants.iter().any(|p| p.condition == *c)).collect()
    }
}

/// Bernoulli log-likelihood of the judgments under the learning recursion,
/// from precomputed observations.
pub fn log_likelihood_obs(params: &AgentParams, observations: &[Observation]) -> f64 {
    let (mut b, mut w) = (params.b0, params.w0);
    let mut total = 0.0;
    for o in observations {
        let v = logistic(b + w * o.x).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        total += if o.judged_correct { v.ln() } else { (1.0 - v).ln() };
        let delta = f64::from(u8::from(o.ai_correct)) - v;
        let (ab, aw) = if o.ai_correct {
            (params.alpha_b_correct, params.alpha_w_correct)
        } else {
            (params.alpha_b_wrong, params.alpha_w_wrong)
        };
        b += ab * delta;
        w += aw * delta * o.x;
    }
    total
}

/// Log-likelihood of a participant's judgments. Empty input gives 0.
pub fn log_likelihood(params: &AgentParams, records: &[TrialRecord]) -> f64 {
    let obs: Vec<Observation> = records.iter().map(Observation::from).collect();
    log_likelihood_obs(params, &obs)
}

/// Per-trial predicted probability of judging "correct" (unclamped v_t).
pub fn predicted_probabilities(params: &AgentParams, records: &[TrialRecord]) -> Vec<f64> {
    let (mut b, mut w) = (params.b0, params.w0);
    records
        .iter()
        .map(|r| {
            let o = Observation::from(r);
            let v = logistic(b + w * o.x);
            let delta = f64::from(u8::from(o.ai_correct)) - v;
            let (ab, aw) = if o.ai_correct {
                (params.alpha_b_correct, params.alpha_w_correct)
            } else {
                (params.alpha_b_wrong, params.alpha_w_wrong)
            };
            b += ab * delta;
            w += aw * delta * o.x;
            v
        })
        .collect()
}

/// Unconstrained coordinates `(b0, w0, logit alpha x4)`.
pub fn to_unconstrained(params: &AgentParams) -> Result<[f64; 6]> {
    params.validate()?;
    let a = params.to_array();
    let lg = |p: f64| (p / (1.0 - p)).ln();
    Ok([a[0], a[1], lg(a[2]), lg(a[3]), lg(a[4]), lg(a[5])])
}

pub fn from_unconstrained(theta: &[f64; 6]) -> AgentParams {
    AgentParams::from_array([
        theta[0],
        theta[1],
        logistic(theta[2]),
        logistic(theta[3]),
        logistic(theta[4]),
        logistic(theta[5]),
    ])
}

/// Participant-level prior on unconstrained coordinates.
pub fn log_prior_unconstrained(theta: &[f64; 6], hyper: &HyperParams, condition: Condition) -> f64 {
    let c = condition.index();
    let mut lp = normal_log_density(theta[0], hyper.mu_b0, hyper.sigma_b0)
        + normal_log_density(theta[1], hyper.mu_w0, hyper.sigma_w0);
    for f in 0..4 {
        lp += normal_log_density(theta[2 + f], hyper.mu_alpha[c][f], hyper.sigma_alpha[c][f]);
    }
    lp
}

/// Participant-level prior: normal densities of b0 and w0 plus normal
/// densities of logit(alpha) under the condition's hypers.
pub fn log_prior_participant(params: &AgentParams, hyper: &HyperParams, condition: Condition) -> Result<f64> {
    hyper.validate()?;
    let theta = to_unconstrained(params)?;
    Ok(log_prior_unconstrained(&theta, hyper, condition))
}

fn exponential_log_density(x: f64, rate: f64) -> f64 {
    rate.ln() - rate * x
}

/// Hyper-prior over every entry of `hyper`, including conditions with no data.
pub fn log_prior_hyper(hyper: &HyperParams) -> Result<f64> {
    hyper.validate()?;
    let mut lp = normal_log_density(hyper.mu_b0, MU_INIT_PRIOR.0, MU_INIT_PRIOR.1)
        + normal_log_density(hyper.mu_w0, MU_INIT_PRIOR.0, MU_INIT_PRIOR.1)
        + exponential_log_density(hyper.sigma_b0, SIGMA_PRIOR_RATE)
        + exponential_log_density(hyper.sigma_w0, SIGMA_PRIOR_RATE);
    for c in 0..4 {
        for f in 0..4 {
            lp += normal_log_density(hyper.mu_alpha[c][f], MU_ALPHA_PRIOR.0, MU_ALPHA_PRIOR.1)
                + exponential_log_density(hyper.sigma_alpha[c][f], SIGMA_PRIOR_RATE);
        }
    }
    Ok(lp)
}

/// Joint log density of all participant parameters and hypers given the data.
/// `params[i]` belongs to `data.participants[i]`.
pub fn log_posterior(params: &[AgentParams], hyper: &HyperParams, data: &Dataset) -> Result<f64> {
    if params.len() != data.participants.len() {
        return Err(Error::Mismatch(format!(
            "{} parameter sets for {} participants",
            params.len(),
            data.participants.len()
        )));
    }
    let mut total = log_prior_hyper(hyper)?;
    for (p, d) in params.iter().zip(&data.participants) {
        total += log_likelihood_obs(p, &d.observations) + log_prior_participant(p, hyper, d.condition)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{perceive, simulate_participant, AgentState, ResponsePolicy};
    use crate::rng::{stream, StreamKind, SimRng};
    use rand::Rng;
    use std::f64::consts::PI;

    /// Straight-line recursion written independently of the library path.
    fn oracle_loglik(p: &AgentParams, records: &[TrialRecord]) -> f64 {
        let mut b = p.b0;
        let mut w = p.w0;
        let mut ll = 0.0;
        for r in records {
            let c = r.ai_confidence.clamp(0.05, 0.95);
            let lc = (c / (1.0 - c)).ln();
            let v = 1.0 / (1.0 + (-(b + w * lc)).exp());
            let vc = v.clamp(1e-9, 1.0 - 1e-9);
            ll += if r.human_judged_correct { vc.ln() } else { (1.0 - vc).ln() };
            let g = if r.ai_correct { 1.0 } else { 0.0 };
            let d = g - v;
            if r.ai_correct {
                b += p.alpha_b_correct * d;
                w += p.alpha_w_correct * d * lc;
            } else {
                b += p.alpha_b_wrong * d;
                w += p.alpha_w_wrong * d * lc;
            }
        }
        ll
    }

    fn oracle_normal(x: f64, m: f64, s: f64) -> f64 {
        (1.0 / (s * (2.0 * PI).sqrt()) * (-(x - m) * (x - m) / (2.0 * s * s)).exp()).ln()
    }

    fn random_params(rng: &mut SimRng) -> AgentParams {
        AgentParams {
            b0: rng.random_range(-2.0..2.0),
            w0: rng.random_range(-2.0..2.0),
            alpha_b_correct: rng.random_range(0.01..0.99),
            alpha_b_wrong: rng.random_range(0.01..0.99),
            alpha_w_correct: rng.random_range(0.01..0.99),
            alpha_w_wrong: rng.random_range(0.01..0.99),
        }
    }

    fn random_hyper(rng: &mut SimRng) -> HyperParams {
        let mut h = HyperParams::prior_means();
        h.mu_b0 = rng.random_range(-1.0..1.0);
        h.sigma_b0 = rng.random_range(0.2..2.0);
        h.mu_w0 = rng.random_range(-1.0..1.0);
        h.sigma_w0 = rng.random_range(0.2..2.0);
        for c in 0..4 {
            for f in 0..4 {
                h.mu_alpha[c][f] = rng.random_range(-3.0..1.0);
                h.sigma_alpha[c][f] = rng.random_range(0.2..2.0);
            }
        }
        h
    }

    fn simulated(cond: Condition, n: u32, seed: u64, id: &str) -> Vec<TrialRecord> {
        let mut rng = stream(seed, StreamKind::Agent, 0);
        let p = random_params(&mut rng);
        simulate_participant(id, &p, &cond.spec(), n, &ResponsePolicy::ProbabilityMatch, &mut rng)
            .into_iter()
            .map(|t| t.record)
            .collect()
    }

    #[test]
    fn inert_agent_likelihood() {
        let params = AgentParams::uniform_rates(0.0, 0.0, 0.0);
        let records = simulated(Condition::Standard, 50, 1, "p");
        assert!((log_likelihood(&params, &records) - 50.0 * 0.5f64.ln()).abs() < 1e-9);
        assert!((log_likelihood(&params, &records) + 34.657).abs() < 1e-3);
        assert_eq!(log_likelihood(&params, &[]), 0.0);
    }

    #[test]
    fn single_trial_likelihood() {
        let params = AgentParams::uniform_rates(0.60, 0.69, 0.2);
        let v = perceive(&AgentState { b: 0.6, w: 0.69, trial_index: 0 }, 0.5);
        let r = [TrialRecord::new("p", Condition::Standard, 1, 0.5, true, true)];
        assert!((log_likelihood(&params, &r) - v.ln()).abs() < 1e-12);
        assert!((log_likelihood(&params, &r) + (1.0 + (-0.6f64).exp()).ln()).abs() < 1e-12);
        assert!((log_likelihood(&params, &r) + 0.43748).abs() < 1e-5);
    }

    #[test]
    fn likelihood_matches_oracle() {
        let mut rng = stream(21, StreamKind::Prior, 0);
        for i in 0..20 {
            let params = random_params(&mut rng);
            let cond = Condition::ALL[i % 4];
            let records = simulated(cond, 50, 100 + i as u64, "p");
            assert!((log_likelihood(&params, &records) - oracle_loglik(&params, &records)).abs() < 1e-9);
        }
    }

    #[test]
    fn saturated_predictions_stay_finite() {
        let params = AgentParams::uniform_rates(40.0, 30.0, 0.9);
        let records = simulated(Condition::Reverse, 50, 2, "p");
        assert!(log_likelihood(&params, &records).is_finite());
    }

    #[test]
    fn participant_prior_mode_and_shift() {
        let hyper = HyperParams { sigma_b0: 0.7, sigma_w0: 1.3, ..HyperParams::prior_means() };
        let c = Condition::Overconfidence;
        let at_mode = AgentParams::uniform_rates(hyper.mu_b0, hyper.mu_w0, logistic(-1.5));
        let expected: f64 = [0.7, 1.3, 1.0, 1.0, 1.0, 1.0].iter().map(|s: &f64| -(s * (2.0 * PI).sqrt()).ln()).sum();
        let lp = log_prior_participant(&at_mode, &hyper, c).unwrap();
        assert!((lp - expected).abs() < 1e-9);
        let shifted = AgentParams { b0: at_mode.b0 + 0.7, ..at_mode };
        assert!((log_prior_participant(&shifted, &hyper, c).unwrap() - (lp - 0.5)).abs() < 1e-12);
        let bad = AgentParams { alpha_w_wrong: 1.0, ..at_mode };
        assert!(log_prior_participant(&bad, &hyper, c).is_err());
    }

    #[test]
    fn participant_prior_matches_oracle() {
        let mut rng = stream(22, StreamKind::Prior, 0);
        for i in 0..20 {
            let p = random_params(&mut rng);
            let h = random_hyper(&mut rng);
            let cond = Condition::ALL[i % 4];
            let c = cond.index();
            let lg = |a: f64| (a / (1.0 - a)).ln();
            let want = oracle_normal(p.b0, h.mu_b0, h.sigma_b0)
                + oracle_normal(p.w0, h.mu_w0, h.sigma_w0)
                + oracle_normal(lg(p.alpha_b_correct), h.mu_alpha[c][0], h.sigma_alpha[c][0])
                + oracle_normal(lg(p.alpha_b_wrong), h.mu_alpha[c][1], h.sigma_alpha[c][1])
                + oracle_normal(lg(p.alpha_w_correct), h.mu_alpha[c][2], h.sigma_alpha[c][2])
                + oracle_normal(lg(p.alpha_w_wrong), h.mu_alpha[c][3], h.sigma_alpha[c][3]);
            assert!((log_prior_participant(&p, &h, cond).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn hyper_prior_properties() {
        assert!((logistic(-1.5) - 0.1824).abs() < 1e-4);
        let base = HyperParams::prior_means();
        let lp = log_prior_hyper(&base).unwrap();
        // mu_alpha at -1.5 is the maximum of its term
        let mut moved = base.clone();
        moved.mu_alpha[2][1] = -1.2;
        assert!(log_prior_hyper(&moved).unwrap() < lp);
        // each sigma contributes -sigma
        let mut wider = base.clone();
        wider.sigma_alpha[0][3] += 0.25;
        assert!((log_prior_hyper(&wider).unwrap() - (lp - 0.25)).abs() < 1e-12);
        let mut bad = base;
        bad.sigma_w0 = 0.0;
        assert!(log_prior_hyper(&bad).is_err());
    }

    #[test]
    fn hyper_prior_matches_oracle() {
        let mut rng = stream(23, StreamKind::Prior, 0);
        for _ in 0..20 {
            let h = random_hyper(&mut rng);
            let mut want = oracle_normal(h.mu_b0, 0.0, 1.0) + oracle_normal(h.mu_w0, 0.0, 1.0) - h.sigma_b0 - h.sigma_w0;
            for c in 0..4 {
                for f in 0..4 {
                    want += oracle_normal(h.mu_alpha[c][f], -1.5, 1.5) - h.sigma_alpha[c][f];
                }
            }
            assert!((log_prior_hyper(&h).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_is_additive() {
        let records = simulated(Condition::Standard, 50, 5, "a");
        let data = Dataset::from_records(&records).unwrap();
        let hyper = HyperParams::prior_means();
        let p = AgentParams::uniform_rates(0.3, 0.5, 0.2);
        let lp = log_posterior(&[p], &hyper, &data).unwrap();
        let parts = log_likelihood(&p, &records)
            + log_prior_participant(&p, &hyper, Condition::Standard).unwrap()
            + log_prior_hyper(&hyper).unwrap();
        assert!((lp - parts).abs() < 1e-9);

        // a second participant with the same trials: only a second likelihood
        // (and its participant prior) is added
        let mut both = records.clone();
        both.extend(records.iter().map(|r| TrialRecord { participant_id: "b".into(), ..r.clone() }));
        let data2 = Dataset::from_records(&both).unwrap();
        let lp2 = log_posterior(&[p, p], &hyper, &data2).unwrap();
        let extra = log_likelihood(&p, &records) + log_prior_participant(&p, &hyper, Condition::Standard).unwrap();
        assert!((lp2 - lp - extra).abs() < 1e-9);

        assert!(log_posterior(&[p, p], &hyper, &data).is_err());
    }

    #[test]
    fn posterior_is_total() {
        let mut rng = stream(24, StreamKind::Prior, 0);
        let mut records = Vec::new();
        for i in 0..4 {
            records.extend(simulated(Condition::ALL[i], 50, 200 + i as u64, &format!("p{i}")));
        }
        let data = Dataset::from_records(&records).unwrap();
        for _ in 0..100 {
            let params: Vec<AgentParams> = (0..4).map(|_| random_params(&mut rng)).collect();
            let h = random_hyper(&mut rng);
            assert!(log_posterior(&params, &h, &data).unwrap().is_finite());
        }
    }

    #[test]
    fn mixed_condition_participant_rejected() {
        let mut records = simulated(Condition::Standard, 10, 3, "p");
        records[4].condition = Condition::Reverse;
        assert!(Dataset::from_records(&records).is_err());
    }

    #[test]
    fn unconstrained_roundtrip() {
        let p = AgentParams { b0: 0.1, w0: -0.3, alpha_b_correct: 0.2, alpha_b_wrong: 0.7, alpha_w_correct: 0.05, alpha_w_wrong: 0.5 };
        let back = from_unconstrained(&to_unconstrained(&p).unwrap());
        for (a, b) in p.to_array().iter().zip(back.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
