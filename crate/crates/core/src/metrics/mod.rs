//! Behavioural statistics: block accuracy, hit and false-alarm rates, d',
//! calibration error, learning slopes, learner classification and model-fit
//! summaries.

mod regression;

pub use regression::{cohort_slope, learning_slope, logistic_irls, CohortSlope, SlopeFit};

use serde::{Deserialize, Serialize};

use crate::confidence::to_tenths;
use crate::datastore::TrialRecord;
use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// Inclusive 1-based trial interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRange {
    pub first: u32,
    pub last: u32,
}

impl TrialRange {
    pub fn new(first: u32, last: u32) -> Self {
        TrialRange { first, last }
    }

    pub fn contains(&self, trial: u32) -> bool {
        (self.first..=self.last).contains(&trial)
    }

    /// Every trial.
    pub fn all() -> Self {
        TrialRange { first: 1, last: u32::MAX }
    }
}

/// Confusion counts of judgments against AI correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SdtCounts {
    /// AI correct and judged correct.
    pub hits: usize,
    /// Trials on which the AI was correct.
    pub n_signal: usize,
    /// AI wrong but judged correct.
    pub false_alarms: usize,
    /// Trials on which the AI was wrong.
    pub n_noise: usize,
}

impl SdtCounts {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut c = SdtCounts::default();
        for r in records {
            if r.ai_correct {
                c.n_signal += 1;
                c.hits += usize::from(r.human_judged_correct);
            } else {
                c.n_noise += 1;
                c.false_alarms += usize::from(r.human_judged_correct);
            }
        }
        c
    }

    pub fn hit_rate(&self) -> Option<f64> {
        (self.n_signal > 0).then(|| self.hits as f64 / self.n_signal as f64)
    }

    pub fn false_alarm_rate(&self) -> Option<f64> {
        (self.n_noise > 0).then(|| self.false_alarms as f64 / self.n_noise as f64)
    }

    /// Corrected d', absent when either class is empty.
    pub fn d_prime(&self) -> Option<f64> {
        dprime(self.hits, self.n_signal, self.false_alarms, self.n_noise).ok()
    }
}

/// Hit and false-alarm rates; a rate is `None` when its class has no trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrFar {
    pub hit_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

pub fn hr_far(records: &[TrialRecord], range: TrialRange) -> HrFar {
    let counts = SdtCounts::from_records(records.iter().filter(|r| range.contains(r.trial_index)));
    HrFar { hit_rate: counts.hit_rate(), false_alarm_rate: counts.false_alarm_rate() }
}

/// d' with the log-linear correction: rates become (k + 0.5) / (n + 1).
pub fn dprime(hits: usize, n_signal: usize, false_alarms: usize, n_noise: usize) -> Result<f64> {
    if n_signal == 0 || n_noise == 0 {
        return Err(Error::InvalidParameter("d' needs at least one signal and one noise trial".into()));
    }
    if hits > n_signal || false_alarms > n_noise {
        return Err(Error::InvalidParameter("counts exceed their class totals".into()));
    }
    let hr = (hits as f64 + 0.5) / (n_signal as f64 + 1.0);
    let far = (false_alarms as f64 + 0.5) / (n_noise as f64 + 1.0);
    Ok(dprime_from_rates(hr, far))
}

/// Uncorrected d' = z(HR) - z(FAR); infinite when a rate is 0 or 1.
pub fn dprime_from_rates(hit_rate: f64, false_alarm_rate: f64) -> f64 {
    normal_quantile(hit_rate) - normal_quantile(false_alarm_rate)
}

/// Statistics of one block of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block_range: TrialRange,
    pub n_trials: usize,
    pub accuracy: f64,
    pub hit_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub d_prime: Option<f64>,
}

fn summarize(range: TrialRange, records: &[&TrialRecord]) -> BlockSummary {
    let counts = SdtCounts::from_records(records.iter().copied());
    let correct = records.iter().filter(|r| r.human_correct).count();
    BlockSummary {
        block_range: range,
        n_trials: records.len(),
        accuracy: correct as f64 / records.len() as f64,
        hit_rate: counts.hit_rate(),
        false_alarm_rate: counts.false_alarm_rate(),
        d_prime: counts.d_prime(),
    }
}

/// Partitions trials by trial index into consecutive blocks of `block_size`
/// (the last block may be shorter). Works on one participant or a pooled cohort.
pub fn block_accuracy(records: &[TrialRecord], block_size: u32) -> Result<Vec<BlockSummary>> {
    if block_size == 0 {
        return Err(Error::InvalidParameter("block_size must be at least 1".into()));
    }
    let max_trial = records.iter().map(|r| r.trial_index).max().ok_or(Error::Empty("records"))?;
    let n_blocks = max_trial.div_ceil(block_size);
    let mut blocks: Vec<Vec<&TrialRecord>> = vec![Vec::new(); n_blocks as usize];
    for r in records {
        blocks[((r.trial_index - 1) / block_size) as usize].push(r);
    }
    Ok(blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(k, b)| {
            let first = k as u32 * block_size + 1;
            summarize(TrialRange::new(first, (first + block_size - 1).min(max_trial)), b)
        })
        .collect())
}

/// Summary of the trials falling in `range`, if any.
pub fn range_summary(records: &[TrialRecord], range: TrialRange) -> Option<BlockSummary> {
    let selected: Vec<&TrialRecord> = records.iter().filter(|r| range.contains(r.trial_index)).collect();
    (!selected.is_empty()).then(|| summarize(range, &selected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin_center: f64,
    pub n: usize,
    pub ai_accuracy: Option<f64>,
    pub perceived_accuracy: Option<f64>,
}

/// Reliability of human judgments against actual AI accuracy, binned by
/// displayed confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

/// Expected calibration error over the eleven displayed-confidence bins:
/// sum over nonempty bins of (|B|/n) * |AI accuracy - perceived accuracy|.
pub fn ece(records: &[TrialRecord]) -> Result<CalibrationReport> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let mut n = [0usize; 11];
    let mut ai = [0usize; 11];
    let mut judged = [0usize; 11];
    for r in records {
        let k = to_tenths(r.ai_confidence) as usize;
        n[k] += 1;
        ai[k] += usize::from(r.ai_correct);
        judged[k] += usize::from(r.human_judged_correct);
    }
    let total = records.len() as f64;
    let mut error = 0.0;
    let bins = (0..11)
        .map(|k| {
            let (ai_acc, perceived) = if n[k] > 0 {
                let a = ai[k] as f64 / n[k] as f64;
                let p = judged[k] as f64 / n[k] as f64;
                error += n[k] as f64 / total * (a - p).abs();
                (Some(a), Some(p))
            } else {
                (None, None)
            };
            CalibrationBin { bin_center: k as f64 / 10.0, n: n[k], ai_accuracy: ai_acc, perceived_accuracy: perceived }
        })
        .collect();
    Ok(CalibrationReport { bins, ece: error })
}

/// ECE restricted to trials in `range`.
pub fn ece_in_range(records: &[TrialRecord], range: TrialRange) -> Result<CalibrationReport> {
    let selected: Vec<TrialRecord> = records.iter().filter(|r| range.contains(r.trial_index)).cloned().collect();
    ece(&selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerClass {
    Learner,
    NonLearner,
}

/// Late-stage window used for learner classification.
pub const LATE_WINDOW: TrialRange = TrialRange { first: 31, last: 50 };
pub const LEARNER_THRESHOLD: f64 = 0.60;

/// Learner iff accuracy on trials 31-50 strictly exceeds 60%.
pub fn classify_learner(records: &[TrialRecord]) -> Result<LearnerClass> {
    let late: Vec<&TrialRecord> = records.iter().filter(|r| LATE_WINDOW.contains(r.trial_index)).collect();
    if late.len() < 20 {
        return Err(Error::InvalidParameter(format!("need trials 31-50, found {} late trials", late.len())));
    }
    let acc = late.iter().filter(|r| r.human_correct).count() as f64 / late.len() as f64;
    Ok(if acc > LEARNER_THRESHOLD { LearnerClass::Learner } else { LearnerClass::NonLearner })
}

/// Agreement and likelihood of model predictions against judgments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFitStats {
    pub n_trials: usize,
    pub agreement: f64,
    pub mean_loglik_per_trial: f64,
    /// `None` when the judgments have no variation (null likelihood is 0).
    pub mcfadden_r2: Option<f64>,
}

pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Bernoulli log-likelihood of judgment `y` under probability `v`, with `v`
/// clamped to [1e-9, 1 - 1e-9].
pub fn bernoulli_loglik(v: f64, y: bool) -> f64 {
    let v = v.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    if y {
        v.ln()
    } else {
        (1.0 - v).ln()
    }
}

/// `predicted[i]` is the model's P(judged correct) for `records[i]`.
/// A prediction of exactly 0.5 counts as predicting "correct".
pub fn model_fit_stats(predicted: &[f64], records: &[TrialRecord]) -> Result<ModelFitStats> {
    if predicted.len() != records.len() {
        return Err(Error::Mismatch(format!("{} predictions for {} records", predicted.len(), records.len())));
    }
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let n = records.len() as f64;
    let agree = predicted
        .iter()
        .zip(records)
        .filter(|(v, r)| (**v >= 0.5) == r.human_judged_correct)
        .count();
    let ll_model: f64 = predicted.iter().zip(records).map(|(v, r)| bernoulli_loglik(*v, r.human_judged_correct)).sum();
    let base = records.iter().filter(|r| r.human_judged_correct).count() as f64 / n;
    let ll_null: f64 = if base == 0.0 || base == 1.0 {
        0.0
    } else {
        records.iter().map(|r| bernoulli_loglik(base, r.human_judged_correct)).sum()
    };
    Ok(ModelFitStats {
        n_trials: records.len(),
        agreement: agree as f64 / n,
        mean_loglik_per_trial: ll_model / n,
        mcfadden_r2: (ll_null != 0.0).then(|| 1.0 - ll_model / ll_null),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::Condition;
    use proptest::prelude::*;

    fn rec(t: u32, c: f64, g: bool, y: bool) -> TrialRecord {
        TrialRecord::new("p", Condition::Standard, t, c, g, y)
    }

    #[test]
    fn blocks_partition_trials() {
        let records: Vec<_> = (1..=50).map(|t| rec(t, 0.5, t % 2 == 0, t % 2 == 0)).collect();
        let blocks = block_accuracy(&records, 10).unwrap();
        assert_eq!(blocks.len(), 5);
        assert!(blocks.iter().all(|b| b.n_trials == 10 && b.accuracy == 1.0));
        assert_eq!(blocks[4].block_range, TrialRange::new(41, 50));

        let partial = block_accuracy(&records[..47], 10).unwrap();
        assert_eq!(partial.last().unwrap().n_trials, 7);
        assert_eq!(partial.last().unwrap().block_range, TrialRange::new(41, 47));
        assert!(block_accuracy(&records, 0).is_err());
        assert!(block_accuracy(&[], 10).is_err());
    }

    #[test]
    fn hr_far_examples() {
        let perfect: Vec<_> = (1..=20).map(|t| rec(t, 0.5, t % 3 == 0, t % 3 == 0)).collect();
        let r = hr_far(&perfect, TrialRange::all());
        assert_eq!((r.hit_rate, r.false_alarm_rate), (Some(1.0), Some(0.0)));

        let yes: Vec<_> = (1..=20).map(|t| rec(t, 0.5, t % 3 == 0, true)).collect();
        let r = hr_far(&yes, TrialRange::all());
        assert_eq!((r.hit_rate, r.false_alarm_rate), (Some(1.0), Some(1.0)));

        let only_correct: Vec<_> = (1..=5).map(|t| rec(t, 0.5, true, true)).collect();
        let r = hr_far(&only_correct, TrialRange::all());
        assert_eq!(r.false_alarm_rate, None);
    }

    #[test]
    fn hr_far_independent_responder() {
        use crate::rng::{stream, StreamKind};
        use rand::Rng;
        let mut rng = stream(3, StreamKind::Cohort, 0);
        let records: Vec<_> = (1..=10_000).map(|t| rec(t, 0.5, rng.random_bool(0.5), rng.random_bool(0.3))).collect();
        let r = hr_far(&records, TrialRange::all());
        assert!((r.hit_rate.unwrap() - r.false_alarm_rate.unwrap()).abs() < 0.05);
    }

    #[test]
    fn dprime_examples() {
        assert_eq!(dprime(7, 10, 7, 10).unwrap(), 0.0);
        let d = dprime(9, 10, 2, 10).unwrap();
        assert!((d + dprime(2, 10, 9, 10).unwrap()).abs() < 1e-12);
        assert!(dprime(1, 0, 0, 3).is_err());
        assert!(dprime_from_rates(1.0, 0.5).is_infinite());
    }

    #[test]
    fn ece_examples() {
        let mut records = Vec::new();
        // bin 0.8: AI 8/10 correct, judged correct 6/10
        for i in 0..10 {
            records.push(rec(i + 1, 0.8, i < 8, i < 6));
        }
        // bin 0.2: AI 2/10 correct, judged correct 3/10
        for i in 0..10 {
            records.push(rec(i + 11, 0.2, i < 2, i < 3));
        }
        let report = ece(&records).unwrap();
        assert!((report.ece - 0.15).abs() < 1e-12);
        assert_eq!(report.bins.len(), 11);
        assert_eq!(report.bins.iter().map(|b| b.n).sum::<usize>(), 20);
        assert_eq!(report.bins[5].ai_accuracy, None);

        let matched: Vec<_> = (1..=10).map(|t| rec(t, 0.6, t <= 4, t > 6)).collect();
        assert_eq!(ece(&matched).unwrap().ece, 0.0);
        assert!(ece(&[]).is_err());
    }

    #[test]
    fn learner_threshold_is_strict() {
        // k of the 20 late trials judged correctly
        let with_late_correct = |k: u32| -> Vec<TrialRecord> {
            (1..=50).map(|t| rec(t, 0.5, true, t <= 30 || t - 30 <= k)).collect()
        };
        assert_eq!(classify_learner(&with_late_correct(13)).unwrap(), LearnerClass::Learner); // 0.65
        assert_eq!(classify_learner(&with_late_correct(12)).unwrap(), LearnerClass::NonLearner); // 0.60
        assert_eq!(classify_learner(&with_late_correct(11)).unwrap(), LearnerClass::NonLearner); // 0.55
        let mut short = with_late_correct(20);
        short.truncate(49);
        assert!(classify_learner(&short).is_err());
    }

    #[test]
    fn model_fit_examples() {
        let records: Vec<_> = (1..=40).map(|t| rec(t, 0.5, true, t % 4 != 0)).collect();
        let exact: Vec<f64> = records.iter().map(|r| f64::from(u8::from(r.human_judged_correct))).collect();
        let s = model_fit_stats(&exact, &records).unwrap();
        assert_eq!(s.agreement, 1.0);
        assert!((s.mcfadden_r2.unwrap() - 1.0).abs() < 1e-6);

        let base = vec![0.75; records.len()];
        let s = model_fit_stats(&base, &records).unwrap();
        assert_eq!(s.mcfadden_r2, Some(0.0));
        assert_eq!(s.agreement, 0.75);

        let tie = vec![0.5; records.len()];
        assert_eq!(model_fit_stats(&tie, &records).unwrap().agreement, 0.75);
        assert!(model_fit_stats(&tie[1..], &records).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_decomposes(outcomes in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let records: Vec<_> = outcomes.iter().enumerate().map(|(i, (g, y))| rec(i as u32 + 1, 0.5, *g, *y)).collect();
            let c = SdtCounts::from_records(&records);
            let acc = records.iter().filter(|r| r.human_correct).count() as f64 / records.len() as f64;
            let n = records.len() as f64;
            let mut recomposed = 0.0;
            if let Some(hr) = c.hit_rate() { recomposed += hr * c.n_signal as f64 / n; }
            if let Some(far) = c.false_alarm_rate() { recomposed += (1.0 - far) * c.n_noise as f64 / n; }
            prop_assert!((acc - recomposed).abs() < 1e-12);
        }

        #[test]
        fn ece_ignores_order(mut outcomes in prop::collection::vec((0u8..=10, any::<bool>(), any::<bool>()), 1..100), seed: u64) {
            let build = |o: &[(u8, bool, bool)]| -> Vec<TrialRecord> {
                o.iter().enumerate().map(|(i, (k, g, y))| rec(i as u32 + 1, f64::from(*k) / 10.0, *g, *y)).collect()
            };
            let before = ece(&build(&outcomes)).unwrap().ece;
            let n = outcomes.len();
            outcomes.rotate_left((seed as usize) % n);
            outcomes.reverse();
            let after = ece(&build(&outcomes)).unwrap().ece;
            prop_assert!((before - after).abs() < 1e-12);
        }

        #[test]
        fn dprime_increases_with_hits(n_signal in 1usize..60, n_noise in 1usize..60, fa_frac in 0.0..=1.0f64, h_frac in 0.0..1.0f64) {
            let fa = (fa_frac * n_noise as f64).floor() as usize;
            let hits = ((h_frac * n_signal as f64).floor() as usize).min(n_signal - 1);
            prop_assert!(dprime(hits + 1, n_signal, fa, n_noise).unwrap() > dprime(hits, n_signal, fa, n_noise).unwrap());
        }

        #[test]
        fn classify_matches_direct_count(flags in prop::collection::vec(any::<bool>(), 50)) {
            let records: Vec<_> = flags.iter().enumerate().map(|(i, y)| rec(i as u32 + 1, 0.5, true, *y)).collect();
            let direct = flags[30..50].iter().filter(|y| **y).count() as f64 / 20.0 > 0.6;
            prop_assert_eq!(classify_learner(&records).unwrap() == LearnerClass::Learner, direct);
        }
    }
}
