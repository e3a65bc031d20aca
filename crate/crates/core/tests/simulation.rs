use trustcal_core::agent::{trajectory, AgentParams, ResponsePolicy};
use trustcal_core::cohort::{simulate_cohort, simulation_hyper, AgentSource, RatePreset};
use trustcal_core::confidence::Condition;
use trustcal_core::datastore::{group_by_participant, TrialRecord};
use trustcal_core::metrics::{classify_learner, ece_in_range, LearnerClass, TrialRange};
use trustcal_core::report::{build_report, write_figures, ReportOptions};

const EARLY: TrialRange = TrialRange { first: 1, last: 10 };
const LATE: TrialRange = TrialRange { first: 41, last: 50 };

fn cohort(preset: RatePreset, n_agents: usize, seed: u64) -> Vec<TrialRecord> {
    let source = AgentSource::Fixed(preset.params());
    simulate_cohort(&source, preset.condition(), n_agents, 50, &ResponsePolicy::ProbabilityMatch, seed)
        .unwrap()
        .into_iter()
        .map(|t| t.record)
        .collect()
}

fn accuracy(records: &[TrialRecord], range: TrialRange) -> f64 {
    let hits: Vec<bool> = records.iter().filter(|r| range.contains(r.trial_index)).map(|r| r.human_correct).collect();
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

/// Mean (b, w) after the final update, averaged over participants.
fn final_state(params: &AgentParams, records: &[TrialRecord]) -> (f64, f64) {
    let groups = group_by_participant(records);
    let (mut b, mut w) = (0.0, 0.0);
    for (_, trials) in &groups {
        let last = *trajectory(params, trials).unwrap().last().unwrap();
        b += last.b;
        w += last.w;
    }
    (b / groups.len() as f64, w / groups.len() as f64)
}

fn learner_fraction(records: &[TrialRecord]) -> f64 {
    let groups = group_by_participant(records);
    let learners = groups.iter().filter(|(_, t)| classify_learner(t).unwrap() == LearnerClass::Learner).count();
    learners as f64 / groups.len() as f64
}

#[test]
fn standard_learners_gain_ten_points() {
    let records = cohort(RatePreset::Standard, 200, 1);
    let gain = accuracy(&records, LATE) - accuracy(&records, EARLY);
    assert!(gain > 0.10, "gain {gain}");
}

#[test]
fn overconfidence_rates_lower_trust_and_raise_sensitivity() {
    let records = cohort(RatePreset::Overconfidence, 200, 2);
    assert!(accuracy(&records, LATE) - accuracy(&records, EARLY) >= 0.10);
    let (b, w) = final_state(&RatePreset::Overconfidence.params(), &records);
    assert!(b < 0.0, "b50 {b}");
    assert!(w > 1.0, "w50 {w}");
}

#[test]
fn underconfidence_rates_raise_trust() {
    let records = cohort(RatePreset::Underconfidence, 200, 3);
    let (b, _) = final_state(&RatePreset::Underconfidence.params(), &records);
    assert!(b > 1.0, "b50 {b}");
}

#[test]
fn reverse_learners_flip_sensitivity_and_non_learners_do_not() {
    let learners = cohort(RatePreset::ReverseLearner, 200, 4);
    assert!(learner_fraction(&learners) > 0.5);
    let (_, w) = final_state(&RatePreset::ReverseLearner.params(), &learners);
    assert!(w < 0.0, "w50 {w}");
    assert!(accuracy(&learners, TrialRange::new(31, 50)) > 0.60);

    let stuck = cohort(RatePreset::ReverseNonLearner, 200, 5);
    assert!(learner_fraction(&stuck) < 0.5);
    assert!(accuracy(&stuck, TrialRange::new(31, 50)) <= 0.60);
}

#[test]
fn calibration_error_falls_in_most_replications() {
    for preset in [RatePreset::Overconfidence, RatePreset::Underconfidence, RatePreset::ReverseLearner] {
        let improved = (0..100)
            .filter(|&rep| {
                let records = cohort(preset, 200, 10_000 + rep);
                ece_in_range(&records, LATE).unwrap().ece < ece_in_range(&records, EARLY).unwrap().ece
            })
            .count();
        assert!(improved >= 90, "{preset}: {improved}/100");
    }
}

#[test]
fn every_condition_improves_in_the_report() {
    let records: Vec<TrialRecord> = [
        RatePreset::Standard,
        RatePreset::Overconfidence,
        RatePreset::Underconfidence,
        RatePreset::ReverseLearner,
    ]
    .into_iter()
    .enumerate()
    .flat_map(|(i, p)| {
        cohort(p, 50, 20 + i as u64).into_iter().map(move |mut r| {
            r.participant_id = format!("{p}-{}", r.participant_id);
            r
        })
    })
    .collect();
    let options = ReportOptions { model_fit: false, ..Default::default() };
    let report = build_report(&records, None, &options).unwrap();
    assert_eq!(report.conditions.len(), 4);
    for c in &report.conditions {
        let (early, late) = (c.early.as_ref().unwrap(), c.late.as_ref().unwrap());
        assert!(late.accuracy > early.accuracy, "{}: {} -> {}", c.condition, early.accuracy, late.accuracy);
    }
    assert!(report.trajectories.is_none());
    assert!(!serde_json::to_string(&report).unwrap().contains("trajectories"));

    let again = build_report(&records, None, &options).unwrap();
    assert_eq!(report, again);
}

#[test]
fn overconfidence_learning_slope_is_in_range() {
    let records = cohort(RatePreset::Overconfidence, 200, 6);
    let options = ReportOptions { model_fit: false, ..Default::default() };
    let report = build_report(&records, None, &options).unwrap();
    let slope = report.conditions[0].learning_slope.as_ref().unwrap();
    assert!((0.02..=0.10).contains(&slope.beta), "beta {}", slope.beta);
}

#[test]
fn self_fit_agreement_is_high() {
    let source = AgentSource::Prior(simulation_hyper());
    let records: Vec<TrialRecord> =
        simulate_cohort(&source, Condition::Standard, 200, 50, &ResponsePolicy::ProbabilityMatch, 7)
            .unwrap()
            .into_iter()
            .map(|t| t.record)
            .collect();
    let report = build_report(&records, None, &ReportOptions::default()).unwrap();
    let fit = report.model_fit.as_ref().unwrap();
    assert_eq!(fit.n_trials, 10_000);
    assert!(fit.agreement >= 0.70, "agreement {}", fit.agreement);
}

#[test]
fn figure_csvs_have_stated_headers() {
    let records = cohort(RatePreset::Standard, 20, 8);
    let report = build_report(&records, None, &ReportOptions { model_fit: false, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_figures(&report, dir.path()).unwrap();
    let header = |name: &str| {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines().next().unwrap().to_string()
    };
    assert!(written.len() >= 2);
    assert_eq!(header("fig3_accuracy.csv"), "condition,block_first,block_last,n_trials,accuracy");
    assert_eq!(header("fig4_hrfar.csv"), "condition,block_first,block_last,hit_rate,false_alarm_rate,d_prime");
}
