//! Logistic regression of per-trial correctness on trial index, fitted by
//! iteratively reweighted least squares, and inverse-variance pooling of the
//! per-participant slopes.

use serde::{Deserialize, Serialize};

use crate::confidence::logistic;
use crate::datastore::TrialRecord;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-8;
/// Slopes of separated data are reported at this magnitude.
pub const SLOPE_CAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub intercept: f64,
    /// Change in log-odds of a correct response per trial.
    pub slope: f64,
    /// Standard error of the slope; infinite when the outcome never varies.
    pub slope_se: f64,
    pub iterations: usize,
    /// Outcomes are (quasi-)completely separated by trial index.
    pub separated: bool,
    pub n: usize,
}

/// Inverse-variance weighted mean of participant slopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSlope {
    pub beta: f64,
    pub se: f64,
    /// Participants that received nonzero weight.
    pub n_pooled: usize,
    pub n_separated: usize,
}

/// Solves the 2x2 system `[a b; b d] x = r`; `None` when singular.
fn solve2(a: f64, b: f64, d: f64, r0: f64, r1: f64) -> Option<(f64, f64, f64)> {
    let det = a * d - b * b;
    (det.abs() > 1e-300 && det.is_finite()).then(|| ((d * r0 - b * r1) / det, (a * r1 - b * r0) / det, a / det))
}

/// Fisher information entries and score for (intercept, slope) on centered x.
fn information(x: &[f64], y: &[bool], b0: f64, b1: f64) -> (f64, f64, f64, f64, f64) {
    let (mut i00, mut i01, mut i11, mut s0, mut s1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let p = logistic(b0 + b1 * xi);
        let w = p * (1.0 - p);
        let resid = f64::from(u8::from(yi)) - p;
        i00 += w;
        i01 += w * xi;
        i11 += w * xi * xi;
        s0 += resid;
        s1 += resid * xi;
    }
    (i00, i01, i11, s0, s1)
}

/// Direction of complete or quasi-complete separation by `x`, if any:
/// `Some(1.0)` when every success sits at or above every failure.
fn separation(x: &[f64], y: &[bool]) -> Option<f64> {
    let max_of = |want: bool| x.iter().zip(y).filter(|(_, yi)| **yi == want).map(|(xi, _)| *xi).fold(f64::NEG_INFINITY, f64::max);
    let min_of = |want: bool| x.iter().zip(y).filter(|(_, yi)| **yi == want).map(|(xi, _)| *xi).fold(f64::INFINITY, f64::min);
    if max_of(false) <= min_of(true) {
        Some(1.0)
    } else if max_of(true) <= min_of(false) {
        Some(-1.0)
    } else {
        None
    }
}

/// Logistic regression of `y` on a single predictor `x` with intercept.
pub fn logistic_irls(x: &[f64], y: &[bool]) -> SlopeFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let center = x.iter().sum::<f64>() / n as f64;
    let xc: Vec<f64> = x.iter().map(|v| v - center).collect();
    let successes = y.iter().filter(|v| **v).count();

    if successes == 0 || successes == n {
        // No variation: the intercept diverges and the slope is unidentified.
        let p = (successes as f64 + 0.5) / (n as f64 + 1.0);
        return SlopeFit {
            intercept: (p / (1.0 - p)).ln(),
            slope: 0.0,
            slope_se: f64::INFINITY,
            iterations: 0,
            separated: true,
            n,
        };
    }

    if let Some(sign) = separation(&xc, y) {
        // Cap the slope and fit the intercept alone by Newton steps.
        let slope = sign * SLOPE_CAP;
        let mut b0 = 0.0;
        let mut iterations = 0;
        for _ in 0..MAX_ITERATIONS {
            iterations += 1;
            let (i00, _, _, s0, _) = information(&xc, y, b0, slope);
            let step = s0 / i00.max(1e-12);
            b0 += step;
            if step.abs() < TOLERANCE {
                break;
            }
        }
        let (i00, i01, i11, _, _) = information(&xc, y, b0, slope);
        let se = solve2(i00, i01, i11, 0.0, 0.0).map_or(f64::INFINITY, |(_, _, inv11)| inv11.abs().sqrt());
        return SlopeFit { intercept: b0 - slope * center, slope, slope_se: se, iterations, separated: true, n };
    }

    let (mut b0, mut b1) = (0.0, 0.0);
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let (i00, i01, i11, s0, s1) = information(&xc, y, b0, b1);
        let Some((d0, d1, _)) = solve2(i00, i01, i11, s0, s1) else { break };
        b0 += d0;
        b1 += d1;
        if d0.abs().max(d1.abs()) < TOLERANCE {
            break;
        }
    }
    let (i00, i01, i11, _, _) = information(&xc, y, b0, b1);
    let se = solve2(i00, i01, i11, 0.0, 0.0).map_or(f64::INFINITY, |(_, _, inv11)| inv11.abs().sqrt());
    let separated = b1.abs() > SLOPE_CAP;
    let slope = b1.clamp(-SLOPE_CAP, SLOPE_CAP);
    SlopeFit { intercept: b0 - slope * center, slope, slope_se: se, iterations, separated, n }
}

/// Slope of correctness on raw trial index for one participant's trials.
pub fn learning_slope(records: &[TrialRecord]) -> Result<SlopeFit> {
    if records.len() < 20 {
        return Err(Error::InvalidParameter(format!("need at least 20 trials, got {}", records.len())));
    }
    let x: Vec<f64> = records.iter().map(|r| f64::from(r.trial_index)).collect();
    let y: Vec<bool> = records.iter().map(|r| r.human_correct).collect();
    Ok(logistic_irls(&x, &y))
}

/// Pools participant slopes with weights 1/se^2; separated fits are
/// excluded. `None` if nothing can be pooled.
pub fn cohort_slope(fits: &[SlopeFit]) -> Option<CohortSlope> {
    let (mut wsum, mut wbeta, mut n_pooled) = (0.0, 0.0, 0);
    for f in fits.iter().filter(|f| !f.separated && f.slope_se.is_finite() && f.slope_se > 0.0) {
        let w = f.slope_se.powi(-2);
        wsum += w;
        wbeta += w * f.slope;
        n_pooled += 1;
    }
    let n_separated = fits.iter().filter(|f| f.separated).count();
    (wsum > 0.0).then(|| CohortSlope { beta: wbeta / wsum, se: wsum.powf(-0.5), n_pooled, n_separated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use rand::Rng;

    #[test]
    fn recovers_known_slope() {
        let mut rng = stream(5, StreamKind::Cohort, 0);
        let x: Vec<f64> = (0..5000).map(|i| f64::from(i % 50 + 1)).collect();
        let y: Vec<bool> = x.iter().map(|&t| rng.random_bool(logistic(-1.0 + 0.05 * t))).collect();
        let fit = logistic_irls(&x, &y);
        assert!(!fit.separated);
        assert!((fit.slope - 0.05).abs() < 3.0 * fit.slope_se, "{fit:?}");
        assert!((fit.intercept + 1.0).abs() < 0.2);
        assert!(fit.iterations < MAX_ITERATIONS);
    }

    #[test]
    fn flat_when_independent_of_trial() {
        let mut rng = stream(6, StreamKind::Cohort, 0);
        let x: Vec<f64> = (1..=5000).map(f64::from).collect();
        let y: Vec<bool> = x.iter().map(|_| rng.random_bool(0.7)).collect();
        assert!(logistic_irls(&x, &y).slope.abs() < 0.01);
    }

    #[test]
    fn deterministic() {
        let x: Vec<f64> = (1..=50).map(f64::from).collect();
        let y: Vec<bool> = (1..=50).map(|t| (t * 7919) % 13 < 8 + t / 10).collect();
        let a = logistic_irls(&x, &y);
        let b = logistic_irls(&x, &y);
        assert!((a.slope - b.slope).abs() < 1e-10);
    }

    #[test]
    fn separation_is_capped_and_flagged() {
        let x: Vec<f64> = (1..=30).map(f64::from).collect();
        let y: Vec<bool> = (1..=30).map(|t| t > 12).collect();
        let fit = logistic_irls(&x, &y);
        assert!(fit.separated);
        assert_eq!(fit.slope, SLOPE_CAP);
        let y: Vec<bool> = (1..=30).map(|t| t <= 12).collect();
        assert_eq!(logistic_irls(&x, &y).slope, -SLOPE_CAP);
        let constant = logistic_irls(&x, &[true; 30]);
        assert!(constant.separated && constant.slope == 0.0);
        assert!(cohort_slope(&[constant]).is_none());
    }

    #[test]
    fn pooling_weights_by_precision() {
        let fit = |slope: f64, se: f64| SlopeFit { intercept: 0.0, slope, slope_se: se, iterations: 3, separated: false, n: 50 };
        let pooled = cohort_slope(&[fit(0.1, 0.1), fit(0.0, 0.2)]).unwrap();
        assert!((pooled.beta - 0.08).abs() < 1e-12);
        assert_eq!(pooled.n_pooled, 2);
    }

    #[test]
    fn needs_twenty_trials() {
        use crate::confidence::Condition;
        let records: Vec<_> = (1..=19).map(|t| TrialRecord::new("p", Condition::Standard, t, 0.5, true, true)).collect();
        assert!(learning_slope(&records).is_err());
    }
}
