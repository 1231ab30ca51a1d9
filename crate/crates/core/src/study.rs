//! Summaries of usability-study measurements: per-condition means of the
//! task metrics and SUS statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::harness::{sus_score, SusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Manual,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyRecord {
    pub participant_id: String,
    pub condition: Condition,
    pub ttfr_seconds: f64,
    pub items_inspected_to_10: u32,
    pub minutes_to_10: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sus_responses: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMeans {
    pub n: usize,
    pub ttfr_seconds: f64,
    pub items_inspected_to_10: f64,
    pub minutes_to_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub conditions: BTreeMap<Condition, ConditionMeans>,
    pub sus_n: usize,
    pub sus_mean: Option<f64>,
    /// Sample (n - 1) standard deviation; absent for fewer than two scores.
    pub sus_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error("no study records")]
    Empty,
    #[error("participant {0} does not have exactly one manual and one tool record")]
    Pairing(String),
    #[error("participant {participant}: {message}")]
    Invalid { participant: String, message: String },
    #[error("participant {participant}: {cause}")]
    Sus { participant: String, cause: SusError },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn validate(r: &StudyRecord) -> Result<(), StudyError> {
    let invalid = |message: &str| {
        Err(StudyError::Invalid {
            participant: r.participant_id.clone(),
            message: message.into(),
        })
    };
    if !(r.ttfr_seconds.is_finite() && r.ttfr_seconds >= 0.0)
        || !(r.minutes_to_10.is_finite() && r.minutes_to_10 >= 0.0)
    {
        return invalid("times must be non-negative");
    }
    if r.items_inspected_to_10 == 0 {
        return invalid("items_inspected_to_10 must be positive");
    }
    if r.sus_responses.is_some() && r.condition == Condition::Manual {
        return invalid("SUS responses belong to the tool condition only");
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

pub fn summarize(records: &[StudyRecord]) -> Result<StudySummary, StudyError> {
    if records.is_empty() {
        return Err(StudyError::Empty);
    }
    let mut seen: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        validate(r)?;
        let e = seen.entry(&r.participant_id).or_default();
        match r.condition {
            Condition::Manual => e.0 += 1,
            Condition::Tool => e.1 += 1,
        }
    }
    if let Some((p, _)) = seen.iter().find(|(_, c)| **c != (1, 1)) {
        return Err(StudyError::Pairing(p.to_string()));
    }

    let mut conditions = BTreeMap::new();
    for c in [Condition::Manual, Condition::Tool] {
        // sort so the floating-point sums do not depend on input order
        let mut rows: Vec<&StudyRecord> = records.iter().filter(|r| r.condition == c).collect();
        rows.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
        conditions.insert(
            c,
            ConditionMeans {
                n: rows.len(),
                ttfr_seconds: mean(rows.iter().map(|r| r.ttfr_seconds)),
                items_inspected_to_10: mean(rows.iter().map(|r| r.items_inspected_to_10 as f64)),
                minutes_to_10: mean(rows.iter().map(|r| r.minutes_to_10)),
            },
        );
    }

    let mut sus_rows: Vec<&StudyRecord> = records.iter().filter(|r| r.sus_responses.is_some()).collect();
    sus_rows.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let mut scores = Vec::with_capacity(sus_rows.len());
    for r in sus_rows {
        let s = sus_score(r.sus_responses.as_deref().unwrap_or_default()).map_err(|cause| StudyError::Sus {
            participant: r.participant_id.clone(),
            cause,
        })?;
        scores.push(s);
    }
    let sus_mean = (!scores.is_empty()).then(|| mean(scores.iter().copied()));
    let sus_std = match (sus_mean, scores.len()) {
        (Some(m), n) if n >= 2 => Some((scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1) as f64).sqrt()),
        _ => None,
    };
    Ok(StudySummary {
        conditions,
        sus_n: scores.len(),
        sus_mean,
        sus_std,
    })
}

/// Parses one record per line; blank lines are skipped.
pub fn parse_study_records(text: &str) -> Result<Vec<StudyRecord>, StudyError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StudyError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn summary_table(s: &StudySummary) -> String {
    let mut out = String::from("metric\tmanual\ttool\n");
    let get = |c: Condition| s.conditions.get(&c);
    let row = |name: &str, f: &dyn Fn(&ConditionMeans) -> f64| {
        let cell = |c: Condition| get(c).map(|m| format!("{:.2}", f(m))).unwrap_or_else(|| "-".into());
        format!("{name}\t{}\t{}\n", cell(Condition::Manual), cell(Condition::Tool))
    };
    out.push_str(&row("ttfr_seconds", &|m| m.ttfr_seconds));
    out.push_str(&row("items_inspected_to_10", &|m| m.items_inspected_to_10));
    out.push_str(&row("minutes_to_10", &|m| m.minutes_to_10));
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    let _ = writeln!(out, "sus_mean\t-\t{}", opt(s.sus_mean));
    let _ = writeln!(out, "sus_std\t-\t{}", opt(s.sus_std));
    out
}
