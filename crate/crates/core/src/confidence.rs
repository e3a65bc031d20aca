//! Generative model of the AI's reported confidence.
//!
//! The AI is correct with probability `p_correct`. Given its correctness, a
//! latent score is drawn from a normal distribution on the logit scale whose
//! mean depends on the class, and the reported confidence is the logistic of
//! that score rounded to the nearest tenth. The four canonical conditions
//! differ only in where the two class means sit.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::rng::{self, StreamKind};

/// Lower and upper bound applied to displayed confidences before any logit.
pub const CONFIDENCE_FLOOR: f64 = 0.05;
pub const CONFIDENCE_CEIL: f64 = 0.95;

/// Default number of pre-generated stimuli per condition.
pub const DEFAULT_POOL_SIZE: usize = 10_000;

/// Log-odds of `p`.
pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(Error::Domain { what: "probability", value: p })
    }
}

/// Logistic sigmoid, evaluated stably for large |x|.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Keeps a displayed confidence inside `[0.05, 0.95]` so its logit is finite.
pub fn clamp_confidence(c: f64) -> f64 {
    c.clamp(CONFIDENCE_FLOOR, CONFIDENCE_CEIL)
}

/// Logit of a displayed confidence after clamping. Never fails.
pub fn clamped_logit(c: f64) -> f64 {
    let c = clamp_confidence(c);
    (c / (1.0 - c)).ln()
}

/// Rounds a probability to the nearest tenth, returning the tenth count.
pub fn to_tenths(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 10.0).round() as u8
}

/// Rounds a probability to the nearest multiple of 0.1.
pub fn round_to_tenth(p: f64) -> f64 {
    f64::from(to_tenths(p)) / 10.0
}

/// Whether `c` lies on the displayed-confidence grid {0.0, 0.1, ..., 1.0}.
pub fn on_confidence_grid(c: f64) -> bool {
    (0.0..=1.0).contains(&c) && ((c * 10.0) - (c * 10.0).round()).abs() < 1e-9
}

/// The four AI calibration conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Standard,
    Overconfidence,
    Underconfidence,
    Reverse,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Standard,
        Condition::Overconfidence,
        Condition::Underconfidence,
        Condition::Reverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Standard => "standard",
            Condition::Overconfidence => "overconfidence",
            Condition::Underconfidence => "underconfidence",
            Condition::Reverse => "reverse",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn spec(self) -> ConditionSpec {
        let (mu_correct, mu_wrong) = match self {
            Condition::Standard => (1.0, -1.0),
            Condition::Overconfidence => (2.0, 0.0),
            Condition::Underconfidence => (0.0, -2.0),
            Condition::Reverse => (-1.0, 1.0),
        };
        ConditionSpec { label: self, mu_correct, mu_wrong, sigma: 0.5, p_correct: 0.5 }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

/// Canonical generative parameters for a condition given by name.
pub fn condition_spec(label: &str) -> Result<ConditionSpec> {
    label.parse::<Condition>().map(Condition::spec)
}

/// Generative parameters of one calibration condition (logit units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub label: Condition,
    pub mu_correct: f64,
    pub mu_wrong: f64,
    pub sigma: f64,
    pub p_correct: f64,
}

impl ConditionSpec {
    pub fn new(label: Condition, mu_correct: f64, mu_wrong: f64, sigma: f64, p_correct: f64) -> Result<Self> {
        let spec = ConditionSpec { label, mu_correct, mu_wrong, sigma, p_correct };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.p_correct > 0.0 && self.p_correct < 1.0) {
            return Err(Error::InvalidParameter(format!("p_correct must lie in (0,1), got {}", self.p_correct)));
        }
        if !self.mu_correct.is_finite() || !self.mu_wrong.is_finite() {
            return Err(Error::InvalidParameter("class means must be finite".into()));
        }
        Ok(())
    }

    fn class_mean(&self, ai_correct: bool) -> f64 {
        if ai_correct {
            self.mu_correct
        } else {
            self.mu_wrong
        }
    }

    /// Same spec with the class means exchanged.
    pub fn swapped(&self) -> Self {
        ConditionSpec { mu_correct: self.mu_wrong, mu_wrong: self.mu_correct, ..*self }
    }

    /// Probability that the displayed confidence equals `tenths / 10` given the class.
    pub fn displayed_probability(&self, tenths: u8, ai_correct: bool) -> f64 {
        let normal = StdNormal::new(0.0, 1.0).expect("unit normal");
        let mu = self.class_mean(ai_correct);
        let cdf_at = |p: f64| -> f64 {
            if p <= 0.0 {
                0.0
            } else if p >= 1.0 {
                1.0
            } else {
                normal.cdf(((p / (1.0 - p)).ln() - mu) / self.sigma)
            }
        };
        let k = f64::from(tenths);
        cdf_at((k + 0.5) / 10.0) - cdf_at((k - 0.5) / 10.0)
    }
}

/// One generated AI response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStimulus {
    pub ai_correct: bool,
    pub confidence_displayed: f64,
    pub confidence_raw: f64,
}

/// Draws one AI response under `spec`.
pub fn sample_trial<R: Rng + ?Sized>(spec: &ConditionSpec, rng: &mut R) -> TrialStimulus {
    let ai_correct = rng.random_bool(spec.p_correct);
    let latent = Normal::new(spec.class_mean(ai_correct), spec.sigma)
        .expect("validated sigma")
        .sample(rng);
    let confidence_raw = logistic(latent);
    TrialStimulus { ai_correct, confidence_displayed: round_to_tenth(confidence_raw), confidence_raw }
}

/// A pre-generated pool of stimuli for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPool {
    pub condition: ConditionSpec,
    pub items: Vec<TrialStimulus>,
    pub seed: u64,
}

impl StimulusPool {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Uniform draw with replacement.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialStimulus {
        self.items[rng.random_range(0..self.items.len())]
    }

    /// Writes the pool as CSV (`index,ai_correct,confidence_raw,confidence_displayed`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "ai_correct", "confidence_raw", "confidence_displayed"])?;
        for (i, item) in self.items.iter().enumerate() {
            w.write_record([
                i.to_string(),
                u8::from(item.ai_correct).to_string(),
                format!("{:.6}", item.confidence_raw),
                format!("{:.6}", item.confidence_displayed),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generates `n` i.i.d. stimuli from the pool stream of `seed`.
pub fn build_pool(spec: &ConditionSpec, n: usize, seed: u64) -> Result<StimulusPool> {
    if n == 0 {
        return Err(Error::InvalidParameter("pool size must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = rng::stream(seed, StreamKind::Pool, spec.label.index() as u64);
    let items = (0..n).map(|_| sample_trial(spec, &mut rng)).collect();
    Ok(StimulusPool { condition: *spec, items, seed })
}

/// Decision table of the likelihood-ratio observer on displayed confidence:
/// entry `k` is true when confidence `k/10` should be judged "correct".
/// Ties resolve to "correct".
pub fn ideal_observer_rule(spec: &ConditionSpec) -> [bool; 11] {
    let mut rule = [false; 11];
    for (k, slot) in rule.iter_mut().enumerate() {
        let k = k as u8;
        let correct = spec.p_correct * spec.displayed_probability(k, true);
        let wrong = (1.0 - spec.p_correct) * spec.displayed_probability(k, false);
        *slot = correct >= wrong;
    }
    rule
}

/// Exact accuracy of the ideal observer, summed over the eleven displayed values.
pub fn ideal_observer_bound(spec: &ConditionSpec) -> f64 {
    (0..=10u8)
        .map(|k| {
            let correct = spec.p_correct * spec.displayed_probability(k, true);
            let wrong = (1.0 - spec.p_correct) * spec.displayed_probability(k, false);
            correct.max(wrong)
        })
        .sum()
}

/// Monte-Carlo accuracy of the likelihood-ratio observer that sees only the
/// displayed confidence.
pub fn ideal_observer_accuracy<R: Rng + ?Sized>(spec: &ConditionSpec, n: usize, rng: &mut R) -> Result<f64> {
    if n < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 draws, got {n}")));
    }
    spec.validate()?;
    let rule = ideal_observer_rule(spec);
    let hits = (0..n)
        .filter(|_| {
            let s = sample_trial(spec, rng);
            rule[to_tenths(s.confidence_displayed) as usize] == s.ai_correct
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// Expected accuracy of thresholding the raw confidence at `threshold`,
/// judging "correct" on the side of the correct-class mean.
pub fn criterion_accuracy(spec: &ConditionSpec, threshold: f64) -> f64 {
    let normal = StdNormal::new(0.0, 1.0).expect("unit normal");
    let cut = (threshold / (1.0 - threshold)).ln();
    let below_correct = normal.cdf((cut - spec.mu_correct) / spec.sigma);
    let below_wrong = normal.cdf((cut - spec.mu_wrong) / spec.sigma);
    if spec.mu_correct > spec.mu_wrong {
        spec.p_correct * (1.0 - below_correct) + (1.0 - spec.p_correct) * below_wrong
    } else {
        spec.p_correct * below_correct + (1.0 - spec.p_correct) * (1.0 - below_wrong)
    }
}

/// Accuracy-maximizing threshold on raw confidence, by grid search over
/// `[0.01, 0.99]` at step 0.001.
pub fn optimal_criterion(spec: &ConditionSpec) -> Result<f64> {
    spec.validate()?;
    if spec.mu_correct == spec.mu_wrong {
        return Err(Error::InvalidParameter("class means are equal; no criterion separates them".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0.5);
    for k in 10..=990u32 {
        let t = f64::from(k) / 1000.0;
        let acc = criterion_accuracy(spec, t);
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn logit_examples() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((logit(0.7311).unwrap() - 1.0).abs() < 1e-3);
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(logit(f64::NAN).is_err());
    }

    #[test]
    fn logistic_inverts_logit() {
        for p in [1e-6, 0.01, 0.3, 0.5, 0.77, 0.999999] {
            assert!((logistic(logit(p).unwrap()) - p).abs() < 1e-12);
        }
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_confidence(1.0), 0.95);
        assert_eq!(clamp_confidence(0.0), 0.05);
        assert_eq!(clamp_confidence(0.7), 0.7);
    }

    #[test]
    fn canonical_specs() {
        let s = condition_spec("standard").unwrap();
        assert_eq!((s.mu_correct, s.mu_wrong, s.sigma, s.p_correct), (1.0, -1.0, 0.5, 0.5));
        let o = condition_spec("overconfidence").unwrap();
        assert_eq!((o.mu_correct, o.mu_wrong), (2.0, 0.0));
        let u = condition_spec("underconfidence").unwrap();
        assert_eq!((u.mu_correct, u.mu_wrong), (0.0, -2.0));
        let r = condition_spec("reverse").unwrap();
        assert_eq!((r.mu_correct, r.mu_wrong), (-1.0, 1.0));
        assert!(matches!(condition_spec("sideways"), Err(Error::UnknownCondition(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(ConditionSpec::new(Condition::Standard, 1.0, -1.0, 0.0, 0.5).is_err());
        assert!(ConditionSpec::new(Condition::Standard, 1.0, -1.0, 0.5, 1.0).is_err());
        assert!(ConditionSpec::new(Condition::Standard, 1.0, -1.0, 0.5, 0.3).is_ok());
    }

    #[test]
    fn sample_trial_is_deterministic_per_seed() {
        let spec = Condition::Standard.spec();
        let a = sample_trial(&spec, &mut stream(11, StreamKind::Observer, 0));
        let b = sample_trial(&spec, &mut stream(11, StreamKind::Observer, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn standard_correct_class_mostly_above_half() {
        // P(z > 0 | N(1, 0.5)) = Phi(2) = 0.97725
        let spec = Condition::Standard.spec();
        let mut rng = stream(1, StreamKind::Observer, 0);
        let (mut n, mut above, mut correct) = (0usize, 0usize, 0usize);
        for _ in 0..100_000 {
            let s = sample_trial(&spec, &mut rng);
            if s.ai_correct {
                correct += 1;
                n += 1;
                if s.confidence_raw > 0.5 {
                    above += 1;
                }
            }
        }
        assert!((above as f64 / n as f64 - 0.977).abs() < 0.005);
        assert!((correct as f64 / 100_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn pool_sizes_and_determinism() {
        let spec = Condition::Overconfidence.spec();
        let pool = build_pool(&spec, DEFAULT_POOL_SIZE, 42).unwrap();
        assert_eq!(pool.len(), 10_000);
        assert_eq!(pool, build_pool(&spec, DEFAULT_POOL_SIZE, 42).unwrap());
        assert_ne!(pool.items, build_pool(&spec, DEFAULT_POOL_SIZE, 43).unwrap().items);
        assert_eq!(build_pool(&spec, 1, 42).unwrap().len(), 1);
        assert!(build_pool(&spec, 0, 42).is_err());
    }

    #[test]
    fn pool_csv_format() {
        let pool = build_pool(&Condition::Standard.spec(), 3, 5).unwrap();
        let mut buf = Vec::new();
        pool.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,ai_correct,confidence_raw,confidence_displayed");
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "0");
        assert!(fields[1] == "0" || fields[1] == "1");
        assert_eq!(fields[2].split('.').nth(1).unwrap().len(), 6);
        assert_eq!(fields[3].split('.').nth(1).unwrap().len(), 6);
    }

    #[test]
    fn displayed_probabilities_sum_to_one() {
        for c in Condition::ALL {
            let spec = c.spec();
            for class in [true, false] {
                let total: f64 = (0..=10).map(|k| spec.displayed_probability(k, class)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ideal_observer_examples() {
        let standard = Condition::Standard.spec();
        let reverse = Condition::Reverse.spec();
        let acc_s = ideal_observer_accuracy(&standard, 100_000, &mut stream(2, StreamKind::Observer, 0)).unwrap();
        let acc_r = ideal_observer_accuracy(&reverse, 100_000, &mut stream(2, StreamKind::Observer, 1)).unwrap();
        assert!((acc_s - 0.97).abs() < 0.015, "{acc_s}");
        assert!((acc_s - acc_r).abs() < 0.005);
        // Monte-Carlo agrees with the exact bin sum.
        assert!((acc_s - ideal_observer_bound(&standard)).abs() < 0.003);

        let flat = ConditionSpec::new(Condition::Standard, 0.3, 0.3, 0.5, 0.5).unwrap();
        let acc_f = ideal_observer_accuracy(&flat, 100_000, &mut stream(2, StreamKind::Observer, 2)).unwrap();
        assert!((acc_f - 0.5).abs() < 0.01);
        assert!(ideal_observer_accuracy(&standard, 999, &mut stream(2, StreamKind::Observer, 0)).is_err());
    }

    #[test]
    fn ideal_observer_swap_invariance() {
        for c in Condition::ALL {
            let spec = c.spec();
            assert!((ideal_observer_bound(&spec) - ideal_observer_bound(&spec.swapped())).abs() < 1e-12);
        }
        let spec = Condition::Overconfidence.spec();
        let a = ideal_observer_accuracy(&spec, 100_000, &mut stream(9, StreamKind::Observer, 0)).unwrap();
        let b = ideal_observer_accuracy(&spec.swapped(), 100_000, &mut stream(9, StreamKind::Observer, 1)).unwrap();
        assert!((a - b).abs() < 0.005);
    }

    #[test]
    fn optimal_criteria() {
        let near = |c: Condition, want: f64| {
            let got = optimal_criterion(&c.spec()).unwrap();
            assert!((got - want).abs() <= 0.002, "{c}: {got}");
        };
        near(Condition::Standard, 0.5);
        near(Condition::Reverse, 0.5);
        near(Condition::Overconfidence, 0.731);
        near(Condition::Underconfidence, 0.269);
        let flat = ConditionSpec::new(Condition::Standard, 0.0, 0.0, 0.5, 0.5).unwrap();
        assert!(optimal_criterion(&flat).is_err());
    }
}
