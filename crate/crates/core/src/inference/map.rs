//! Per-participant maximum a posteriori fits with hypers held fixed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::confidence::Condition;
use crate::datastore::TrialRecord;
use crate::error::{Error, Result};
use crate::inference::model::{from_unconstrained, log_likelihood_obs, log_prior_unconstrained, HyperParams, Observation};
use crate::rng::{self, StreamKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    /// Simplex diameter below which a restart counts as converged.
    pub tolerance: f64,
    pub seed: u64,
    pub hyper: HyperParams,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { restarts: 20, max_evals: 10_000, tolerance: 1e-6, seed: 0, hyper: HyperParams::prior_means() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: AgentParams,
    pub log_posterior_at_mode: f64,
    /// True when the best restart met the tolerance.
    pub converged: bool,
    /// Evaluations summed over restarts.
    pub n_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex minimization with standard coefficients.
///
/// Stops when the largest distance from the best vertex to any other vertex
/// falls below `tolerance`, or after `max_evals` evaluations of `f`.
/// Non-finite objective values are treated as +inf.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, tolerance: f64, max_evals: usize) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let diameter = |s: &[Vec<f64>]| {
        s[1..].iter().map(|v| v.iter().zip(&s[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max)
    };
    let point = |c: &[f64], toward: &[f64], t: f64| -> Vec<f64> { c.iter().zip(toward).map(|(a, b)| a + t * (b - a)).collect() };

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < tolerance {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = point(&centroid, &worst, -1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = point(&centroid, &worst, -2.0);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = point(&centroid, &reflected, 0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            } else {
                let c = point(&centroid, &worst, 0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = point(&best, &simplex[i], 0.5);
                    values[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }
    Minimum { x: simplex[0].clone(), value: values[0], evaluations: evals, converged }
}

/// Log posterior of one participant on unconstrained coordinates.
pub fn participant_log_posterior(theta: &[f64; 6], obs: &[Observation], hyper: &HyperParams, condition: Condition) -> f64 {
    log_likelihood_obs(&from_unconstrained(theta), obs) + log_prior_unconstrained(theta, hyper, condition)
}

/// MAP estimate of one participant's parameters under fixed hypers. Restart
/// points are drawn from the participant-level prior.
pub fn fit_map(records: &[TrialRecord], hyper: &HyperParams, condition: Condition, options: &FitOptions) -> Result<FitResult> {
    hyper.validate()?;
    if options.restarts == 0 || options.max_evals == 0 {
        return Err(Error::InvalidParameter("restarts and max_evals must be positive".into()));
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", options.tolerance)));
    }
    let obs: Vec<Observation> = records.iter().map(Observation::from).collect();
    let c = condition.index();
    let means = [hyper.mu_b0, hyper.mu_w0, hyper.mu_alpha[c][0], hyper.mu_alpha[c][1], hyper.mu_alpha[c][2], hyper.mu_alpha[c][3]];
    let sds = [hyper.sigma_b0, hyper.sigma_w0, hyper.sigma_alpha[c][0], hyper.sigma_alpha[c][1], hyper.sigma_alpha[c][2], hyper.sigma_alpha[c][3]];

    let mut rng = rng::stream(options.seed, StreamKind::Fit, 0);
    let objective = |x: &[f64]| {
        let theta: [f64; 6] = x.try_into().expect("six coordinates");
        -participant_log_posterior(&theta, &obs, hyper, condition)
    };

    let mut best: Option<Minimum> = None;
    let mut total_evals = 0;
    for _ in 0..options.restarts {
        let x0: Vec<f64> = (0..6).map(|k| means[k] + sds[k] * rng.sample::<f64, _>(StandardNormal)).collect();
        let m = nelder_mead(objective, &x0, 0.5, options.tolerance, options.max_evals);
        total_evals += m.evaluations;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one restart");
    let theta: [f64; 6] = best.x.as_slice().try_into().expect("six coordinates");
    Ok(FitResult {
        params: from_unconstrained(&theta),
        log_posterior_at_mode: -best.value,
        converged: best.converged,
        n_evaluations: total_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], 0.5, 1e-9, 10_000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn respects_eval_budget() {
        let m = nelder_mead(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[5.0; 6], 0.5, 1e-12, 50);
        assert!(!m.converged);
        assert!(m.evaluations <= 50 + 6);
    }

    #[test]
    fn no_data_fit_is_the_prior_mode() {
        let hyper = HyperParams::prior_means();
        let fit = fit_map(&[], &hyper, Condition::Standard, &FitOptions { restarts: 3, ..Default::default() }).unwrap();
        let p = fit.params;
        assert!(fit.converged);
        assert!(p.b0.abs() < 1e-5 && p.w0.abs() < 1e-5);
        let prior_rate = crate::confidence::logistic(-1.5);
        for r in p.rates() {
            assert!((r - prior_rate).abs() < 1e-5);
        }
    }
}
