//! Non-centered parameterization of the hierarchical model for the block
//! sampler.
//!
//! Coordinates: six standardized offsets per participant, followed by
//! `(mu, ln sigma)` pairs for b0, w0 and each present condition and rate
//! family. Participant parameters are `mu + sigma * z` (with a logistic link
//! for learning rates).

use rand::Rng;

use crate::agent::AgentParams;
use crate::confidence::{logistic, Condition};
use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;
use crate::inference::model::{
    log_likelihood_obs, Dataset, HyperParams, Observation, RateFamily, MU_ALPHA_PRIOR, MU_INIT_PRIOR, SIGMA_PRIOR_RATE,
};
use crate::inference::sampler::{self, slice_sample, BlockTarget, SamplerConfig};
use crate::rng::SimRng;

const PER_PARTICIPANT: usize = 6;

#[derive(Debug, Clone, Copy)]
enum Block {
    Participant(usize),
    B0,
    W0,
    Rate { slot: usize, family: usize },
}

/// The posterior of a [`Dataset`] in sampler coordinates.
pub struct HierarchicalTarget<'a> {
    data: &'a Dataset,
    conditions: Vec<Condition>,
    /// Position of each participant's condition in `conditions`.
    slots: Vec<usize>,
    /// Participants per condition slot.
    members: Vec<Vec<usize>>,
    blocks: Vec<Block>,
    /// Participants whose likelihood depends on each block.
    block_terms: Vec<Vec<usize>>,
}

impl<'a> HierarchicalTarget<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let conditions = data.conditions();
        let slots: Vec<usize> = data
            .participants
            .iter()
            .map(|p| conditions.iter().position(|c| *c == p.condition).unwrap_or_default())
            .collect();
        let mut members = vec![Vec::new(); conditions.len()];
        for (i, &s) in slots.iter().enumerate() {
            members[s].push(i);
        }
        let mut blocks: Vec<Block> = (0..data.len()).map(Block::Participant).collect();
        blocks.push(Block::B0);
        blocks.push(Block::W0);
        for slot in 0..conditions.len() {
            for family in 0..4 {
                blocks.push(Block::Rate { slot, family });
            }
        }
        let everyone: Vec<usize> = (0..data.len()).collect();
        let block_terms = blocks
            .iter()
            .map(|b| match *b {
                Block::Participant(i) => vec![i],
                Block::B0 | Block::W0 => everyone.clone(),
                Block::Rate { slot, .. } => members[slot].clone(),
            })
            .collect();
        Ok(HierarchicalTarget { data, conditions, slots, members, blocks, block_terms })
    }

    fn hyper_start(&self) -> usize {
        PER_PARTICIPANT * self.data.len()
    }

    fn rate_offset(&self, slot: usize, family: usize) -> usize {
        self.hyper_start() + 4 + 2 * (4 * slot + family)
    }

    fn participant_params(&self, i: usize, x: &[f64]) -> AgentParams {
        let z = &x[PER_PARTICIPANT * i..PER_PARTICIPANT * (i + 1)];
        let h = self.hyper_start();
        let slot = self.slots[i];
        let rate = |f: usize| {
            let o = self.rate_offset(slot, f);
            logistic(x[o] + x[o + 1].exp() * z[2 + f])
        };
        AgentParams {
            b0: x[h] + x[h + 1].exp() * z[0],
            w0: x[h + 2] + x[h + 3].exp() * z[1],
            alpha_b_correct: rate(0),
            alpha_b_wrong: rate(1),
            alpha_w_correct: rate(2),
            alpha_w_wrong: rate(3),
        }
    }

    fn participant_loglik(&self, i: usize, x: &[f64]) -> f64 {
        log_likelihood_obs(&self.participant_params(i, x), &self.data.participants[i].observations)
    }

    /// Normal prior on `mu` plus exponential prior on `sigma`, with the
    /// Jacobian of `ln sigma`.
    fn hyper_log_prior(mu: f64, log_sigma: f64, mu_prior: (f64, f64)) -> f64 {
        let sigma = log_sigma.exp();
        -0.5 * ((mu - mu_prior.0) / mu_prior.1).powi(2) - SIGMA_PRIOR_RATE * sigma + log_sigma
    }

    /// Full log density in sampler coordinates, up to a constant.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let h = self.hyper_start();
        let mut total = Self::hyper_log_prior(x[h], x[h + 1], MU_INIT_PRIOR)
            + Self::hyper_log_prior(x[h + 2], x[h + 3], MU_INIT_PRIOR);
        for slot in 0..self.conditions.len() {
            for f in 0..4 {
                let o = self.rate_offset(slot, f);
                total += Self::hyper_log_prior(x[o], x[o + 1], MU_ALPHA_PRIOR);
            }
        }
        for i in 0..self.data.len() {
            let z = &x[PER_PARTICIPANT * i..PER_PARTICIPANT * (i + 1)];
            total += self.participant_loglik(i, x) - 0.5 * z.iter().map(|v| v * v).sum::<f64>();
        }
        total
    }

    /// Participant parameters and hypers at `x`. Hypers of conditions without
    /// participants are left at their prior means.
    pub fn to_natural(&self, x: &[f64]) -> (Vec<AgentParams>, HyperParams) {
        let h = self.hyper_start();
        let mut hyper = HyperParams::prior_means();
        hyper.mu_b0 = x[h];
        hyper.sigma_b0 = x[h + 1].exp();
        hyper.mu_w0 = x[h + 2];
        hyper.sigma_w0 = x[h + 3].exp();
        for (slot, c) in self.conditions.iter().enumerate() {
            for f in 0..4 {
                let o = self.rate_offset(slot, f);
                hyper.mu_alpha[c.index()][f] = x[o];
                hyper.sigma_alpha[c.index()][f] = x[o + 1].exp();
            }
        }
        let params = (0..self.data.len()).map(|i| self.participant_params(i, x)).collect();
        (params, hyper)
    }

    /// Centered update of one `(mu, ln sigma)` pair given the participant
    /// values it governs, followed by re-deriving their offsets. `mu` is
    /// drawn from its normal full conditional and `ln sigma` by slice
    /// sampling.
    fn centered_update(&self, x: &mut [f64], o: usize, members: &[usize], coord: usize, prior: (f64, f64), rng: &mut SimRng) {
        let (mu, log_sigma) = (x[o], x[o + 1]);
        let sigma = log_sigma.exp();
        let theta: Vec<f64> = members.iter().map(|&i| mu + sigma * x[PER_PARTICIPANT * i + coord]).collect();
        let n = theta.len() as f64;
        let precision = 1.0 / (prior.1 * prior.1) + n / (sigma * sigma);
        let centre = (prior.0 / (prior.1 * prior.1) + theta.iter().sum::<f64>() / (sigma * sigma)) / precision;
        let new_mu = centre + rng.sample::<f64, _>(rand_distr::StandardNormal) / precision.sqrt();
        let ss: f64 = theta.iter().map(|t| (t - new_mu).powi(2)).sum();
        let conditional = |ls: f64| -n * ls - 0.5 * ss * (-2.0 * ls).exp() - SIGMA_PRIOR_RATE * ls.exp() + ls;
        let new_log_sigma = slice_sample(conditional, log_sigma, 1.0, rng);
        let new_sigma = new_log_sigma.exp();
        x[o] = new_mu;
        x[o + 1] = new_log_sigma;
        for (&i, t) in members.iter().zip(&theta) {
            x[PER_PARTICIPANT * i + coord] = (t - new_mu) / new_sigma;
        }
    }

    /// Sum of `ln sigma` over every group scale used by a participant, plus
    /// every sampled hyper scale. This is the log Jacobian linking
    /// [`Self::log_density`] to the centered posterior.
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        let h = self.hyper_start();
        let n = self.data.len() as f64;
        let mut total = (n + 1.0) * (x[h + 1] + x[h + 3]);
        for (slot, members) in self.members.iter().enumerate() {
            for f in 0..4 {
                total += (members.len() as f64 + 1.0) * x[self.rate_offset(slot, f) + 1];
            }
        }
        total
    }
}

impl BlockTarget for HierarchicalTarget<'_> {
    fn dim(&self) -> usize {
        self.hyper_start() + 4 + 8 * self.conditions.len()
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        let h = self.hyper_start();
        self.blocks
            .iter()
            .map(|b| match *b {
                Block::Participant(i) => (PER_PARTICIPANT * i..PER_PARTICIPANT * (i + 1)).collect(),
                Block::B0 => vec![h, h + 1],
                Block::W0 => vec![h + 2, h + 3],
                Block::Rate { slot, family } => {
                    let o = self.rate_offset(slot, family);
                    vec![o, o + 1]
                }
            })
            .collect()
    }

    fn block_log_density(&self, block: usize, x: &[f64]) -> f64 {
        let h = self.hyper_start();
        match self.blocks[block] {
            Block::Participant(i) => {
                let z = &x[PER_PARTICIPANT * i..PER_PARTICIPANT * (i + 1)];
                -0.5 * z.iter().map(|v| v * v).sum::<f64>()
            }
            Block::B0 => Self::hyper_log_prior(x[h], x[h + 1], MU_INIT_PRIOR),
            Block::W0 => Self::hyper_log_prior(x[h + 2], x[h + 3], MU_INIT_PRIOR),
            Block::Rate { slot, family } => {
                let o = self.rate_offset(slot, family);
                Self::hyper_log_prior(x[o], x[o + 1], MU_ALPHA_PRIOR)
            }
        }
    }

    fn n_terms(&self) -> usize {
        self.data.len()
    }

    fn block_terms(&self, block: usize) -> &[usize] {
        &self.block_terms[block]
    }

    fn term(&self, k: usize, x: &[f64]) -> f64 {
        self.participant_loglik(k, x)
    }

    fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = self.hyper_start();
        for slot in 0..self.conditions.len() {
            for f in 0..4 {
                x[self.rate_offset(slot, f)] += MU_ALPHA_PRIOR.0;
            }
        }
        // Keep initial group scales moderate so offsets start informative.
        for o in (h + 1..self.dim()).step_by(2) {
            x[o] = x[o] * 0.5 - 0.5;
        }
        x
    }

    fn gibbs_moves(&self, x: &mut [f64], rng: &mut SimRng) {
        let h = self.hyper_start();
        let everyone: Vec<usize> = (0..self.data.len()).collect();
        self.centered_update(x, h, &everyone, 0, MU_INIT_PRIOR, rng);
        self.centered_update(x, h + 2, &everyone, 1, MU_INIT_PRIOR, rng);
        for (slot, members) in self.members.iter().enumerate() {
            for f in 0..4 {
                self.centered_update(x, self.rate_offset(slot, f), members, 2 + f, MU_ALPHA_PRIOR, rng);
            }
        }
    }

    fn output_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["mu_b0", "sigma_b0", "mu_w0", "sigma_w0"].iter().map(|s| s.to_string()).collect();
        for c in &self.conditions {
            for f in RateFamily::ALL {
                names.push(format!("mu_{}[{c}]", f.param_name()));
                names.push(format!("sigma_{}[{c}]", f.param_name()));
            }
        }
        for p in &self.data.participants {
            for n in AgentParams::NAMES {
                names.push(format!("{n}[{}]", p.id));
            }
        }
        names
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        let (params, hyper) = self.to_natural(x);
        let mut out = vec![hyper.mu_b0, hyper.sigma_b0, hyper.mu_w0, hyper.sigma_w0];
        for c in &self.conditions {
            for f in 0..4 {
                out.push(hyper.mu_alpha[c.index()][f]);
                out.push(hyper.sigma_alpha[c.index()][f]);
            }
        }
        for p in &params {
            out.extend(p.to_array());
        }
        out
    }
}

/// Draws from the joint posterior of all participant parameters and hypers.
///
/// Learning-rate draws are reported on the natural scale; `mu_alpha_*` and
/// `sigma_alpha_*` are logit-scale group parameters.
pub fn sample_posterior(data: &Dataset, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let target = HierarchicalTarget::new(data)?;
    sampler::sample(&target, config)
}

/// Posterior means of each participant's parameters, in dataset order.
pub fn posterior_mean_params(draws: &PosteriorDraws, data: &Dataset) -> Result<Vec<AgentParams>> {
    data.participants
        .iter()
        .map(|p| {
            let mut a = [0.0; 6];
            for (k, n) in AgentParams::NAMES.iter().enumerate() {
                let name = format!("{n}[{}]", p.id);
                let idx = draws.index_of(&name).ok_or_else(|| Error::Mismatch(format!("no draws for `{name}`")))?;
                a[k] = crate::stats::mean(&draws.pooled(idx));
            }
            Ok(AgentParams::from_array(a))
        })
        .collect()
}

/// The reduced model with learning rates and `w0` fixed at zero: judgments
/// are Bernoulli(logistic(b0)) with a normal prior on `b0`.
pub struct InterceptOnlyTarget<'a> {
    pub observations: &'a [Observation],
    pub prior_mean: f64,
    pub prior_sd: f64,
}

impl InterceptOnlyTarget<'_> {
    pub fn log_density(&self, b0: f64) -> f64 {
        let params = AgentParams::uniform_rates(b0, 0.0, 0.0);
        log_likelihood_obs(&params, self.observations) - 0.5 * ((b0 - self.prior_mean) / self.prior_sd).powi(2)
    }
}

impl BlockTarget for InterceptOnlyTarget<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn blocks(&self) -> Vec<Vec<usize>> {
        vec![vec![0]]
    }
    fn block_log_density(&self, _block: usize, x: &[f64]) -> f64 {
        self.log_density(x[0])
    }
    fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
        vec![self.prior_mean + rng.random_range(-2.0..2.0) * self.prior_sd]
    }
    fn output_names(&self) -> Vec<String> {
        vec!["b0".into()]
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
