//! On-disk data model: trial logs (CSV) and session configuration (JSON).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confidence::{on_confidence_grid, round_to_tenth, Condition, DEFAULT_POOL_SIZE};
use crate::error::{Error, Result};

/// Column order of the trial log.
pub const TRIAL_HEADER: [&str; 9] = [
    "participant_id",
    "condition",
    "trial_index",
    "ai_confidence",
    "ai_correct",
    "human_judged_correct",
    "human_correct",
    "response_ms",
    "timestamp",
];

/// Extra columns appended to simulated-data exports.
pub const SIMULATION_EXTRA_HEADER: [&str; 4] = ["confidence_raw", "v", "b", "w"];

/// One judged trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub condition: Condition,
    /// 1-based.
    pub trial_index: u32,
    /// Displayed confidence, a multiple of 0.1.
    pub ai_confidence: f64,
    pub ai_correct: bool,
    pub human_judged_correct: bool,
    pub human_correct: bool,
    pub response_ms: Option<u64>,
    pub timestamp: Option<String>,
}

impl TrialRecord {
    /// Builds a record, deriving `human_correct` from the judgment.
    pub fn new(
        participant_id: impl Into<String>,
        condition: Condition,
        trial_index: u32,
        ai_confidence: f64,
        ai_correct: bool,
        human_judged_correct: bool,
    ) -> Self {
        TrialRecord {
            participant_id: participant_id.into(),
            condition,
            trial_index,
            ai_confidence: round_to_tenth(ai_confidence),
            ai_correct,
            human_judged_correct,
            human_correct: human_judged_correct == ai_correct,
            response_ms: None,
            timestamp: None,
        }
    }

    /// Checks the per-record invariants.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.participant_id.is_empty() {
            return Err("empty participant_id".into());
        }
        if self.participant_id.contains(['\n', '\r']) {
            return Err("participant_id contains a line break".into());
        }
        if self.trial_index == 0 {
            return Err("trial_index must start at 1".into());
        }
        if !on_confidence_grid(self.ai_confidence) {
            return Err(format!("ai_confidence {} is not a multiple of 0.1 in [0,1]", self.ai_confidence));
        }
        if self.human_correct != (self.human_judged_correct == self.ai_correct) {
            return Err("human_correct contradicts ai_correct and human_judged_correct".into());
        }
        Ok(())
    }
}

/// A simulated trial with the agent's latent quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrial {
    pub record: TrialRecord,
    pub confidence_raw: f64,
    /// Perceived accuracy used for the judgment.
    pub v: f64,
    /// Baseline trust before the trial's update.
    pub b: f64,
    /// Confidence sensitivity before the trial's update.
    pub w: f64,
}

fn bool_field(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn record_fields(r: &TrialRecord) -> [String; 9] {
    [
        r.participant_id.clone(),
        r.condition.to_string(),
        r.trial_index.to_string(),
        format!("{:.1}", r.ai_confidence),
        bool_field(r.ai_correct).into(),
        bool_field(r.human_judged_correct).into(),
        bool_field(r.human_correct).into(),
        r.response_ms.map(|m| m.to_string()).unwrap_or_default(),
        r.timestamp.clone().unwrap_or_default(),
    ]
}

/// Writes trial records as CSV.
pub fn write_trials<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_path(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_trials(records, BufWriter::new(File::create(path)?))
}

/// Writes simulated trials: the trial schema plus `confidence_raw,v,b,w`.
pub fn write_simulated<W: Write>(trials: &[SimulatedTrial], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER.iter().chain(SIMULATION_EXTRA_HEADER.iter()))?;
    for t in trials {
        let mut fields = record_fields(&t.record).to_vec();
        fields.extend([t.confidence_raw, t.v, t.b, t.w].map(|x| format!("{x:.6}")));
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_simulated_path(trials: &[SimulatedTrial], path: impl AsRef<Path>) -> Result<()> {
    write_simulated(trials, BufWriter::new(File::create(path)?))
}

fn parse_bool(s: &str, column: &str, row: usize) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Validation { row, message: format!("{column}: expected 0 or 1, got `{other}`") }),
    }
}

fn parse_record(fields: &csv::StringRecord, row: usize) -> Result<TrialRecord> {
    let bad = |message: String| Error::Validation { row, message };
    let get = |i: usize| fields.get(i).unwrap_or("");
    let condition = Condition::from_str(get(1)).map_err(|e| bad(e.to_string()))?;
    let trial_index = get(2).parse::<u32>().map_err(|_| bad(format!("trial_index: invalid `{}`", get(2))))?;
    let raw_conf = get(3).parse::<f64>().map_err(|_| bad(format!("ai_confidence: invalid `{}`", get(3))))?;
    if !on_confidence_grid(raw_conf) {
        return Err(bad(format!("ai_confidence {raw_conf} is not a multiple of 0.1 in [0,1]")));
    }
    let response_ms = match get(7) {
        "" => None,
        s => Some(s.parse::<u64>().map_err(|_| bad(format!("response_ms: invalid `{s}`")))?),
    };
    let timestamp = match get(8) {
        "" => None,
        s => Some(s.to_string()),
    };
    let record = TrialRecord {
        participant_id: get(0).to_string(),
        condition,
        trial_index,
        ai_confidence: round_to_tenth(raw_conf),
        ai_correct: parse_bool(get(4), "ai_correct", row)?,
        human_judged_correct: parse_bool(get(5), "human_judged_correct", row)?,
        human_correct: parse_bool(get(6), "human_correct", row)?,
        response_ms,
        timestamp,
    };
    record.check().map_err(bad)?;
    Ok(record)
}

/// Reads and validates a trial log. Trailing extra columns (as written by
/// [`write_simulated`]) are accepted and ignored. Row numbers in errors are
/// 1-based data rows.
pub fn read_trials<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.len() < TRIAL_HEADER.len() || header.iter().zip(TRIAL_HEADER).any(|(a, b)| a != b) {
        return Err(Error::Validation {
            row: 0,
            message: format!("header must begin with `{}`", TRIAL_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    // (last trial index, rows seen) per participant
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let fields = row?;
        let record = parse_record(&fields, row_no)?;
        let expected = seen.get(&record.participant_id).map_or(1, |last| last + 1);
        if record.trial_index != expected {
            return Err(Error::Validation {
                row: row_no,
                message: format!(
                    "participant {}: expected trial_index {expected}, got {}",
                    record.participant_id, record.trial_index
                ),
            });
        }
        seen.insert(record.participant_id.clone(), record.trial_index);
        records.push(record);
    }
    Ok(records)
}

pub fn read_trials_path(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    read_trials(BufReader::new(File::open(path)?))
}

/// Splits records by participant (sorted by id), each ordered by trial index.
pub fn group_by_participant(records: &[TrialRecord]) -> Vec<(String, Vec<TrialRecord>)> {
    let mut groups: BTreeMap<String, Vec<TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.participant_id.clone()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(id, mut rs)| {
            rs.sort_by_key(|r| r.trial_index);
            (id, rs)
        })
        .collect()
}

/// Condition requested for a session: fixed, or assigned uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConditionChoice {
    Random,
    Fixed(Condition),
}

impl TryFrom<String> for ConditionChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ConditionChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            Ok(ConditionChoice::Random)
        } else {
            s.parse().map(ConditionChoice::Fixed)
        }
    }
}

impl From<ConditionChoice> for String {
    fn from(c: ConditionChoice) -> String {
        c.to_string()
    }
}

impl fmt::Display for ConditionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionChoice::Random => f.write_str("random"),
            ConditionChoice::Fixed(c) => c.fmt(f),
        }
    }
}

/// Configuration of a live experiment session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub condition: ConditionChoice,
    pub n_trials: u32,
    pub seed: u64,
    pub bonus_per_correct: f64,
    pub bonus_cap: f64,
    pub pool_size: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            condition: ConditionChoice::Random,
            n_trials: 50,
            seed: 0,
            bonus_per_correct: 0.01,
            bonus_cap: 0.50,
            pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
        }
        if !(self.bonus_cap >= 0.0) || !(self.bonus_per_correct >= 0.0) {
            return Err(Error::InvalidParameter("bonus amounts must be non-negative".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::InvalidParameter("pool_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: SessionConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Count,
    Contiguity,
    Condition,
    Participant,
    ConfidenceGrid,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

/// Outcome of [`validate_session`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionReport {
    pub violations: Vec<Violation>,
}

impl SessionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation { kind, message: message.into() });
    }
}

/// Checks one participant's session log against its configuration.
pub fn validate_session(records: &[TrialRecord], config: &SessionConfig) -> SessionReport {
    let mut report = SessionReport::default();
    if records.len() != config.n_trials as usize {
        report.push(ViolationKind::Count, format!("expected {} trials, found {}", config.n_trials, records.len()));
    }
    for (i, r) in records.iter().enumerate() {
        let expected = i as u32 + 1;
        if r.trial_index != expected {
            report.push(
                ViolationKind::Contiguity,
                format!("position {}: expected trial_index {expected}, found {}", i + 1, r.trial_index),
            );
        }
        if !on_confidence_grid(r.ai_confidence) {
            report.push(ViolationKind::ConfidenceGrid, format!("trial {}: confidence {}", r.trial_index, r.ai_confidence));
        }
        if r.human_correct != (r.human_judged_correct == r.ai_correct) {
            report.push(ViolationKind::Consistency, format!("trial {}: human_correct inconsistent", r.trial_index));
        }
    }
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.condition != first.condition) {
            report.push(ViolationKind::Condition, "session mixes conditions");
        }
        if let ConditionChoice::Fixed(c) = config.condition {
            if first.condition != c {
                report.push(ViolationKind::Condition, format!("configured {c}, recorded {}", first.condition));
            }
        }
        if records.iter().any(|r| r.participant_id != first.participant_id) {
            report.push(ViolationKind::Participant, "session mixes participant ids");
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(n: u32) -> Vec<TrialRecord> {
        (1..=n)
            .map(|t| TrialRecord::new("p1", Condition::Standard, t, f64::from(t % 11) / 10.0, t % 2 == 0, t % 3 == 0))
            .collect()
    }

    #[test]
    fn header_and_booleans() {
        let mut buf = Vec::new();
        let mut r = TrialRecord::new("p1", Condition::Reverse, 1, 0.7, true, false);
        r.response_ms = Some(812);
        write_trials(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRIAL_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "p1,reverse,1,0.7,1,0,0,812,");
    }

    #[test]
    fn off_grid_confidence_names_row() {
        let text = format!("{}\np1,standard,1,0.5,1,1,1,,\np1,standard,2,0.55,1,1,1,,\n", TRIAL_HEADER.join(","));
        match read_trials(text.as_bytes()) {
            Err(Error::Validation { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("0.55"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn xnor_violation_rejected() {
        let text = format!("{}\np1,standard,1,0.5,1,0,1,,\n", TRIAL_HEADER.join(","));
        assert!(matches!(read_trials(text.as_bytes()), Err(Error::Validation { row: 1, .. })));
    }

    #[test]
    fn bad_header_and_duplicates_rejected() {
        let text = "participant,condition\n";
        assert!(read_trials(text.as_bytes()).is_err());
        let text = format!("{}\np1,standard,1,0.5,1,1,1,,\np1,standard,1,0.5,1,1,1,,\n", TRIAL_HEADER.join(","));
        assert!(matches!(read_trials(text.as_bytes()), Err(Error::Validation { row: 2, .. })));
    }

    #[test]
    fn simulated_export_reads_back_as_trials() {
        let trials: Vec<SimulatedTrial> = session(3)
            .into_iter()
            .map(|record| SimulatedTrial { record, confidence_raw: 0.123456789, v: 0.5, b: 0.1, w: -0.2 })
            .collect();
        let mut buf = Vec::new();
        write_simulated(&trials, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with("timestamp,confidence_raw,v,b,w"));
        assert!(text.contains(",0.123457,0.500000,0.100000,-0.200000"));
        let back = read_trials(buf.as_slice()).unwrap();
        assert_eq!(back, trials.into_iter().map(|t| t.record).collect::<Vec<_>>());
    }

    #[test]
    fn session_validation() {
        let config = SessionConfig::default();
        assert!(validate_session(&session(50), &config).passed());

        let short = validate_session(&session(49), &config);
        assert!(short.has(ViolationKind::Count));

        let mut mixed = session(50);
        mixed[10].condition = Condition::Reverse;
        assert!(validate_session(&mixed, &config).has(ViolationKind::Condition));

        let mut gap = session(50);
        gap[20].trial_index = 40;
        assert!(validate_session(&gap, &config).has(ViolationKind::Contiguity));

        let fixed = SessionConfig { condition: ConditionChoice::Fixed(Condition::Reverse), ..config };
        assert!(validate_session(&session(50), &fixed).has(ViolationKind::Condition));
    }

    #[test]
    fn session_config_json() {
        let c = SessionConfig::from_json(r#"{"condition":"reverse","n_trials":20}"#).unwrap();
        assert_eq!(c.condition, ConditionChoice::Fixed(Condition::Reverse));
        assert_eq!(c.n_trials, 20);
        assert_eq!(c.bonus_cap, 0.5);
        assert_eq!(c.pool_size, 10_000);
        assert!(SessionConfig::from_json(r#"{"condition":"random","colour":"red"}"#).is_err());
        assert!(SessionConfig::from_json(r#"{"n_trials":0}"#).is_err());
        assert!(SessionConfig::from_json(r#"{"condition":"bogus"}"#).is_err());
        let text = serde_json::to_string(&SessionConfig::default()).unwrap();
        assert_eq!(SessionConfig::from_json(&text).unwrap(), SessionConfig::default());
    }
}
