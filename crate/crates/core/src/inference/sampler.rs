//! Adaptive random-walk Metropolis-within-Gibbs.
//!
//! Coordinates are partitioned into blocks; each sweep proposes a joint
//! Gaussian move for every block in turn and accepts it against the block's
//! full conditional. During warmup each block learns a proposal covariance
//! (two estimation windows) and a global step size tuned by Robbins-Monro
//! toward the target acceptance rate; both are frozen after warmup and the
//! warmup draws are discarded.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;
use crate::rng::{self, SimRng, StreamKind};

/// A density the sampler can explore block by block.
///
/// The log density may be split into expensive cached terms (for example
/// per-participant likelihoods) and a cheap remainder. A block's full
/// conditional is `block_log_density` plus the cached terms it touches.
pub trait BlockTarget: Sync {
    fn dim(&self) -> usize;

    /// Disjoint coordinate blocks covering `0..dim()`.
    fn blocks(&self) -> Vec<Vec<usize>>;

    /// Uncached part of the log density, up to parts not involving `block`.
    fn block_log_density(&self, block: usize, x: &[f64]) -> f64;

    fn n_terms(&self) -> usize {
        0
    }

    /// Cached terms whose value depends on the coordinates of `block`.
    fn block_terms(&self, _block: usize) -> &[usize] {
        &[]
    }

    fn term(&self, _k: usize, _x: &[f64]) -> f64 {
        0.0
    }

    /// Full conditional of `block` up to a constant, computed from scratch.
    fn block_conditional(&self, block: usize, x: &[f64]) -> f64 {
        self.block_log_density(block, x) + self.block_terms(block).iter().map(|&k| self.term(k, x)).sum::<f64>()
    }

    fn initial_point(&self, rng: &mut SimRng) -> Vec<f64>;

    /// Names of the reported quantities.
    fn output_names(&self) -> Vec<String>;

    /// Reported quantities at `x` (typically constrained-scale parameters).
    fn output(&self, x: &[f64]) -> Vec<f64>;

    /// Additional exact-conditional moves run once per sweep after the
    /// Metropolis blocks. Must leave the target invariant.
    fn gibbs_moves(&self, _x: &mut [f64], _rng: &mut SimRng) {}
}

/// One univariate slice-sampling update (stepping out, then shrinkage).
pub fn slice_sample<F: Fn(f64) -> f64>(log_density: F, x0: f64, width: f64, rng: &mut SimRng) -> f64 {
    let level = log_density(x0) + rng.random::<f64>().ln();
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    for _ in 0..100 {
        if log_density(lo) <= level {
            break;
        }
        lo -= width;
    }
    for _ in 0..100 {
        if log_density(hi) <= level {
            break;
        }
        hi += width;
    }
    loop {
        let x = rng.random_range(lo..hi);
        if log_density(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-12 {
            return x0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain, warmup included.
    pub n_iterations: usize,
    pub n_warmup: usize,
    pub seed: u64,
    /// Full sweeps over all blocks per recorded iteration.
    pub sweeps_per_iteration: usize,
    pub target_acceptance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_iterations: 2000,
            n_warmup: 1000,
            seed: 0,
            sweeps_per_iteration: 6,
            target_acceptance: 0.3,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.sweeps_per_iteration == 0 {
            return Err(Error::InvalidParameter("n_chains and sweeps_per_iteration must be positive".into()));
        }
        if self.n_warmup >= self.n_iterations {
            return Err(Error::InvalidParameter(format!(
                "n_warmup ({}) must be smaller than n_iterations ({})",
                self.n_warmup, self.n_iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidParameter("target_acceptance must lie in (0,1)".into()));
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        self.n_iterations - self.n_warmup
    }
}

struct BlockState {
    coords: Vec<usize>,
    chol: DMatrix<f64>,
    log_scale: f64,
    adapt_steps: usize,
    window: Vec<Vec<f64>>,
    proposed: usize,
    accepted: usize,
}

impl BlockState {
    fn new(coords: Vec<usize>) -> Self {
        let d = coords.len();
        BlockState {
            chol: DMatrix::identity(d, d),
            log_scale: (0.5 / (d as f64).sqrt()).ln(),
            coords,
            adapt_steps: 0,
            window: Vec::new(),
            proposed: 0,
            accepted: 0,
        }
    }

    fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Replaces the proposal shape with the regularized window covariance.
    fn refit_covariance(&mut self) {
        let n = self.window.len();
        let d = self.dim();
        if n < 2 * d + 2 {
            self.window.clear();
            return;
        }
        let mut mean = DVector::zeros(d);
        for s in &self.window {
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for s in &self.window {
            let dev = DVector::from_column_slice(s) - &mean;
            cov += &dev * dev.transpose();
        }
        cov /= (n - 1) as f64;
        let nf = n as f64;
        let shrunk = cov * (nf / (nf + 5.0)) + DMatrix::identity(d, d) * (1e-3 * 5.0 / (nf + 5.0));
        if let Some(chol) = shrunk.cholesky() {
            self.chol = chol.l();
            self.log_scale = (2.38 / (d as f64).sqrt()).ln();
            self.adapt_steps = 0;
        }
        self.window.clear();
    }
}

/// Output of a single chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// Post-warmup draws of the target's outputs, `[iteration][output]`.
    pub draws: Vec<Vec<f64>>,
    /// Post-warmup acceptance rate per block.
    pub acceptance: Vec<f64>,
}

/// Chain position with cached term values at `x`.
struct Position {
    x: Vec<f64>,
    proposal: Vec<f64>,
    terms: Vec<f64>,
    scratch: Vec<f64>,
}

impl Position {
    fn new<T: BlockTarget>(target: &T, x: Vec<f64>) -> Self {
        let mut p = Position { proposal: x.clone(), x, terms: vec![0.0; target.n_terms()], scratch: Vec::new() };
        p.refresh(target);
        p
    }

    fn refresh<T: BlockTarget>(&mut self, target: &T) {
        for (k, t) in self.terms.iter_mut().enumerate() {
            *t = target.term(k, &self.x);
        }
    }
}

fn metropolis_step<T: BlockTarget>(target: &T, b: usize, block: &mut BlockState, pos: &mut Position, rng: &mut SimRng) -> bool {
    let d = block.dim();
    let eps = DVector::<f64>::from_iterator(d, (0..d).map(|_| rng.sample(StandardNormal)));
    let step = &block.chol * eps * block.log_scale.exp();
    for (k, &i) in block.coords.iter().enumerate() {
        pos.proposal[i] = pos.x[i] + step[k];
    }
    let terms = target.block_terms(b);
    let current = target.block_log_density(b, &pos.x) + terms.iter().map(|&k| pos.terms[k]).sum::<f64>();
    pos.scratch.clear();
    pos.scratch.extend(terms.iter().map(|&k| target.term(k, &pos.proposal)));
    let proposed = target.block_log_density(b, &pos.proposal) + pos.scratch.iter().sum::<f64>();
    let log_u: f64 = rng.random::<f64>().ln();
    let accept = proposed.is_finite() && (log_u < proposed - current || !current.is_finite());
    if accept {
        for &i in &block.coords {
            pos.x[i] = pos.proposal[i];
        }
        for (&k, &v) in terms.iter().zip(&pos.scratch) {
            pos.terms[k] = v;
        }
    } else {
        for &i in &block.coords {
            pos.proposal[i] = pos.x[i];
        }
    }
    accept
}

/// Runs one chain on its own random stream.
pub fn run_chain<T: BlockTarget>(target: &T, config: &SamplerConfig, chain: usize) -> ChainRun {
    let mut rng = rng::stream(config.seed, StreamKind::Chain, chain as u64);
    let mut pos = Position::new(target, target.initial_point(&mut rng));
    let mut blocks: Vec<BlockState> = target.blocks().into_iter().map(BlockState::new).collect();

    let warmup = config.n_warmup;
    let window_start = warmup * 15 / 100;
    let first_refit = warmup * 45 / 100;
    let second_refit = warmup * 80 / 100;
    let mut draws = Vec::with_capacity(config.n_kept());

    for it in 0..config.n_iterations {
        let adapting = it < warmup;
        if it == warmup {
            for block in &mut blocks {
                block.proposed = 0;
                block.accepted = 0;
            }
        }
        for _ in 0..config.sweeps_per_iteration {
            for (b, block) in blocks.iter_mut().enumerate() {
                let accepted = metropolis_step(target, b, block, &mut pos, &mut rng);
                block.proposed += 1;
                block.accepted += usize::from(accepted);
                if adapting {
                    block.adapt_steps += 1;
                    let gain = (block.adapt_steps as f64 + 10.0).powf(-0.6);
                    block.log_scale += gain * (f64::from(u8::from(accepted)) - config.target_acceptance);
                }
            }
            target.gibbs_moves(&mut pos.x, &mut rng);
            pos.proposal.copy_from_slice(&pos.x);
            pos.refresh(target);
        }
        if adapting {
            if (window_start..second_refit).contains(&it) {
                for block in &mut blocks {
                    let sample = block.coords.iter().map(|&i| pos.x[i]).collect();
                    block.window.push(sample);
                }
            }
            if it + 1 == first_refit || it + 1 == second_refit {
                for block in &mut blocks {
                    block.refit_covariance();
                }
            }
        } else {
            draws.push(target.output(&pos.x));
        }
    }

    let acceptance = blocks.iter().map(|b| b.accepted as f64 / b.proposed.max(1) as f64).collect();
    ChainRun { draws, acceptance }
}

/// Runs `config.n_chains` independent chains in parallel and assembles the
/// draws in chain order.
pub fn sample<T: BlockTarget>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let runs: Vec<ChainRun> = (0..config.n_chains).into_par_iter().map(|c| run_chain(target, config, c)).collect();
    let acceptance = runs.iter().map(|r| r.acceptance.clone()).collect();
    let draws = runs.into_iter().map(|r| r.draws).collect();
    PosteriorDraws::new(target.output_names(), draws, config.seed, acceptance)
}
