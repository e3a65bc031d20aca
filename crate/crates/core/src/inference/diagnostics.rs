//! Convergence diagnostics over multiple chains of one scalar parameter.

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Within-chain mean variance `W` and between-chain variance `B` for chains
/// of equal length `n`.
fn within_between(chains: &[&[f64]]) -> (f64, f64, usize) {
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    let b = n as f64 * var(&means);
    (w, b, n)
}

fn check_shape(chains: &[Vec<f64>], min_len: usize) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("chains must have equal length".into()));
    }
    if n < min_len {
        return Err(Error::InvalidParameter(format!("need at least {min_len} draws per chain, got {n}")));
    }
    Ok(n)
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is halved; with `n` draws per half, `W` the mean within-half
/// variance and `B` the between-half variance of means (times `n`),
/// `R = sqrt((W (n-1)/n + B/n) / W)`. When every half is constant, the
/// result is 1.0 if they share one value and infinity otherwise.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_shape(chains, 4)?;
    let half = n / 2;
    let mut splits: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        // an odd middle draw is dropped
        splits.push(&c[..half]);
        splits.push(&c[n - half..]);
    }
    let (w, b, n) = within_between(&splits);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = n as f64;
    Ok(((w * (nf - 1.0) / nf + b / nf) / w).sqrt())
}

/// Autocovariance of `x` (about its mean) at `lag`, normalized by `n`.
fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Effective sample size pooled across chains.
///
/// Autocorrelations are combined across chains as
/// `rho_t = 1 - (W - mean_chain_acov_t) / var_plus`, then summed in
/// consecutive pairs `rho_{2k} + rho_{2k+1}` until the first negative pair,
/// with pair sums forced non-increasing (Geyer's initial monotone sequence).
/// `ESS = m n / tau`, `tau = -1 + 2 sum(pairs)`. Constant chains give `m n`.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_shape(chains, 4)?;
    let m = chains.len();
    let total = (m * n) as f64;
    let views: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let (w, b, _) = within_between(&views);
    if w == 0.0 {
        return Ok(total);
    }
    let nf = n as f64;
    let var_plus = w * (nf - 1.0) / nf + b / nf;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let rho = |lag: usize| -> f64 {
        if lag == 0 {
            return 1.0;
        }
        let mean_acov =
            chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut previous = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(previous);
        previous = pair;
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10());
    Ok(total / tau)
}
