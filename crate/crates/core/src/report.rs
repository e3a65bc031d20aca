//! The metrics report: per-condition behavioural summaries, calibration,
//! learning slopes, learner proportions, model fit and optional posterior
//! trajectories, plus per-figure CSV exports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::Condition;
use crate::datastore::TrialRecord;
use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;
use crate::inference::hierarchical::posterior_mean_params;
use crate::inference::map::{fit_map, FitOptions};
use crate::inference::model::{predicted_probabilities, Dataset};
use crate::inference::trajectories::{posterior_trajectories, PosteriorTrajectories};
use crate::metrics::{
    block_accuracy, classify_learner, cohort_slope, ece_in_range, learning_slope, model_fit_stats, range_summary,
    BlockSummary, CalibrationReport, CohortSlope, LearnerClass, ModelFitStats, TrialRange,
};

pub const EARLY_BLOCK: TrialRange = TrialRange { first: 1, last: 10 };
pub const LATE_BLOCK: TrialRange = TrialRange { first: 41, last: 50 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub block_size: u32,
    /// Compute model-fit statistics (from MAP fits unless a posterior is given).
    pub model_fit: bool,
    pub fit_options: FitOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { block_size: 10, model_fit: true, fit_options: FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub n_classified: usize,
    pub n_learners: usize,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub n_participants: usize,
    pub n_trials: usize,
    pub blocks: Vec<BlockSummary>,
    pub early: Option<BlockSummary>,
    pub late: Option<BlockSummary>,
    pub calibration_all: CalibrationReport,
    pub calibration_early: Option<CalibrationReport>,
    pub calibration_late: Option<CalibrationReport>,
    pub learning_slope: Option<CohortSlope>,
    pub learners: LearnerSummary,
    pub model_fit: Option<ModelFitStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Map,
    PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_participants: usize,
    pub n_trials: usize,
    pub conditions: Vec<ConditionReport>,
    pub prediction_source: Option<PredictionSource>,
    pub model_fit: Option<ModelFitStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<PosteriorTrajectories>,
}

fn learner_summary(data: &Dataset, condition: Condition) -> LearnerSummary {
    let classes: Vec<LearnerClass> = data
        .participants
        .iter()
        .filter(|p| p.condition == condition)
        .filter_map(|p| classify_learner(&p.records).ok())
        .collect();
    let n_learners = classes.iter().filter(|c| **c == LearnerClass::Learner).count();
    LearnerSummary {
        n_classified: classes.len(),
        n_learners,
        fraction: (!classes.is_empty()).then(|| n_learners as f64 / classes.len() as f64),
    }
}

/// Per-participant predicted probabilities, in dataset order.
fn predictions(data: &Dataset, draws: Option<&PosteriorDraws>, options: &FitOptions) -> Result<Vec<Vec<f64>>> {
    let params = match draws {
        Some(d) => posterior_mean_params(d, data)?,
        None => data
            .participants
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let opts = FitOptions { seed: options.seed.wrapping_add(i as u64), ..options.clone() };
                fit_map(&p.records, &options.hyper, p.condition, &opts).map(|f| f.params)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(params.iter().zip(&data.participants).map(|(p, d)| predicted_probabilities(p, &d.records)).collect())
}

fn fit_stats<'a>(pairs: impl Iterator<Item = (&'a Vec<f64>, &'a Vec<TrialRecord>)>) -> Result<Option<ModelFitStats>> {
    let (mut v, mut r) = (Vec::new(), Vec::new());
    for (p, recs) in pairs {
        v.extend_from_slice(p);
        r.extend_from_slice(recs);
    }
    if r.is_empty() {
        return Ok(None);
    }
    model_fit_stats(&v, &r).map(Some)
}

/// Builds the report for a trial log. With `draws`, model fit uses posterior
/// means and posterior trajectories are included.
pub fn build_report(records: &[TrialRecord], draws: Option<&PosteriorDraws>, options: &ReportOptions) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let data = Dataset::from_records(records)?;
    let predicted = if options.model_fit || draws.is_some() {
        Some(predictions(&data, draws, &options.fit_options)?)
    } else {
        None
    };

    let mut conditions = Vec::new();
    for condition in data.conditions() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| data.participants[i].condition == condition).collect();
        let pooled: Vec<TrialRecord> = members.iter().flat_map(|&i| data.participants[i].records.iter().cloned()).collect();
        let slopes: Vec<_> = members.iter().filter_map(|&i| learning_slope(&data.participants[i].records).ok()).collect();
        let model_fit = match &predicted {
            Some(p) => fit_stats(members.iter().map(|&i| (&p[i], &data.participants[i].records)))?,
            None => None,
        };
        conditions.push(ConditionReport {
            condition,
            n_participants: members.len(),
            n_trials: pooled.len(),
            blocks: block_accuracy(&pooled, options.block_size)?,
            early: range_summary(&pooled, EARLY_BLOCK),
            late: range_summary(&pooled, LATE_BLOCK),
            calibration_all: ece_in_range(&pooled, TrialRange::all())?,
            calibration_early: ece_in_range(&pooled, EARLY_BLOCK).ok(),
            calibration_late: ece_in_range(&pooled, LATE_BLOCK).ok(),
            learning_slope: cohort_slope(&slopes),
            learners: learner_summary(&data, condition),
            model_fit,
        });
    }

    let model_fit = match &predicted {
        Some(p) => fit_stats(p.iter().zip(data.participants.iter().map(|d| &d.records)))?,
        None => None,
    };
    let trajectories = draws.map(|d| posterior_trajectories(d, &data)).transpose()?;
    Ok(Report {
        n_participants: data.len(),
        n_trials: records.len(),
        conditions,
        prediction_source: predicted.as_ref().map(|_| if draws.is_some() { PredictionSource::PosteriorMean } else { PredictionSource::Map }),
        model_fit,
        trajectories,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `fig3_accuracy.csv`, `fig4_hrfar.csv` and, when the report has
/// trajectories, `fig6_trajectories.csv` into `dir`. Returns the paths written.
pub fn write_figures(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();

    let path = dir.join("fig3_accuracy.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "condition,block_first,block_last,n_trials,accuracy")?;
    for c in &report.conditions {
        for b in &c.blocks {
            writeln!(w, "{},{},{},{},{}", c.condition, b.block_range.first, b.block_range.last, b.n_trials, b.accuracy)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("fig4_hrfar.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "condition,block_first,block_last,hit_rate,false_alarm_rate,d_prime")?;
    for c in &report.conditions {
        for b in &c.blocks {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.condition,
                b.block_range.first,
                b.block_range.last,
                opt(b.hit_rate),
                opt(b.false_alarm_rate),
                opt(b.d_prime)
            )?;
        }
    }
    w.flush()?;
    written.push(path);

    if let Some(t) = &report.trajectories {
        let path = dir.join("fig6_trajectories.csv");
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "condition,step,b_mean,b_lower,b_upper,w_mean,w_lower,w_upper")?;
        for c in &t.by_condition {
            for (b, wb) in c.bands.b.iter().zip(&c.bands.w) {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    c.condition, b.step, b.mean, b.lower, b.upper, wb.mean, wb.lower, wb.upper
                )?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
