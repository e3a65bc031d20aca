//! Per-participant session state machine.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use trustcal_core::confidence::{Condition, StimulusPool, TrialStimulus};
use trustcal_core::datastore::{write_trials, SessionConfig, TrialRecord};
use trustcal_core::rng::SimRng;

/// Cover-story dot colors.
pub const PALETTE: [&str; 6] = ["red", "blue", "green", "orange", "purple", "yellow"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    BetweenTrials,
    AwaitingJudgment,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionError {
    /// The session has no trials left.
    Finished,
    /// A judgment arrived while no trial was awaiting one.
    NoActiveTrial,
}

impl SessionError {
    pub fn message(self) -> &'static str {
        match self {
            SessionError::Finished => "session is finished",
            SessionError::NoActiveTrial => "no trial is awaiting a judgment",
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveTrial {
    stimulus: TrialStimulus,
    dot_colors: [&'static str; 2],
    prediction_color: &'static str,
}

/// What the participant sees on a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_index: u32,
    pub ai_prediction_color: String,
    pub ai_confidence: f64,
    pub dot_colors: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub judged_correct: bool,
    #[serde(default)]
    pub response_ms: Option<u64>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub was_human_correct: bool,
    pub ai_was_correct: bool,
    pub score_delta: u32,
    pub bonus_accrued: f64,
    pub finished: bool,
}

pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub condition: Condition,
    pool: Arc<StimulusPool>,
    rng: SimRng,
    current_trial: u32,
    active: Option<ActiveTrial>,
    score: u32,
    records: Vec<TrialRecord>,
    state: SessionState,
    pub last_active: Instant,
}

impl Session {
    pub fn new(id: String, config: SessionConfig, condition: Condition, pool: Arc<StimulusPool>, rng: SimRng) -> Self {
        Session {
            id,
            config,
            condition,
            pool,
            rng,
            current_trial: 0,
            active: None,
            score: 0,
            records: Vec::new(),
            state: SessionState::BetweenTrials,
            last_active: Instant::now(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn current_trial(&self) -> u32 {
        self.current_trial
    }

    pub fn score(&self) -> u32 {
        self.score
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn bonus_accrued(&self) -> f64 {
        (f64::from(self.score) * self.config.bonus_per_correct).min(self.config.bonus_cap)
    }

    fn view(&self) -> TrialView {
        let a = self.active.as_ref().expect("active trial");
        TrialView {
            trial_index: self.current_trial,
            ai_prediction_color: a.prediction_color.to_string(),
            ai_confidence: a.stimulus.confidence_displayed,
            dot_colors: a.dot_colors.map(str::to_string),
        }
    }

    /// Presents the current trial, drawing a new stimulus only when the
    /// previous one has been judged.
    pub fn trial(&mut self) -> Result<TrialView, SessionError> {
        self.last_active = Instant::now();
        match self.state {
            SessionState::Finished => Err(SessionError::Finished),
            SessionState::AwaitingJudgment => Ok(self.view()),
            SessionState::BetweenTrials => {
                let stimulus = self.pool.draw(&mut self.rng);
                let first = self.rng.random_range(0..PALETTE.len());
                let second = (first + self.rng.random_range(1..PALETTE.len())) % PALETTE.len();
                let dot_colors = [PALETTE[first], PALETTE[second]];
                let prediction_color = dot_colors[self.rng.random_range(0..2)];
                self.active = Some(ActiveTrial { stimulus, dot_colors, prediction_color });
                self.current_trial += 1;
                self.state = SessionState::AwaitingJudgment;
                Ok(self.view())
            }
        }
    }

    pub fn judge(&mut self, judgment: Judgment) -> Result<Feedback, SessionError> {
        self.last_active = Instant::now();
        match self.state {
            SessionState::Finished => return Err(SessionError::Finished),
            SessionState::BetweenTrials => return Err(SessionError::NoActiveTrial),
            SessionState::AwaitingJudgment => {}
        }
        let active = self.active.take().expect("active trial");
        let mut record = TrialRecord::new(
            &self.id,
            self.condition,
            self.current_trial,
            active.stimulus.confidence_displayed,
            active.stimulus.ai_correct,
            judgment.judged_correct,
        );
        record.response_ms = judgment.response_ms;
        record.timestamp = judgment.timestamp;
        let was_human_correct = record.human_correct;
        self.records.push(record);
        let score_delta = u32::from(was_human_correct);
        self.score += score_delta;
        self.state = if self.current_trial >= self.config.n_trials {
            SessionState::Finished
        } else {
            SessionState::BetweenTrials
        };
        Ok(Feedback {
            was_human_correct,
            ai_was_correct: active.stimulus.ai_correct,
            score_delta,
            bonus_accrued: self.bonus_accrued(),
            finished: self.state == SessionState::Finished,
        })
    }

    pub fn export_csv(&self) -> String {
        let mut buf = Vec::new();
        write_trials(&self.records, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
