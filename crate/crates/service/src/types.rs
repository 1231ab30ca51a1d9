use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use greylit_core::connectors::RetrievedItem;
use greylit_core::models::Prediction;
use greylit_core::planner::{QueryBundle, SearchIntent, SearchOptions};
use greylit_core::{Label, Source};
use serde::{Deserialize, Serialize};

/// Pipeline stage of a run. The declaration order is the only forward
/// order a run may move in; `Failed` is reachable from any live stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Planning,
    Fetching,
    Classifying,
    Complete,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Planning => "planning",
            RunStatus::Fetching => "fetching",
            RunStatus::Classifying => "classifying",
            RunStatus::Complete => "complete",
            RunStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Complete | RunStatus::Failed)
    }

    pub fn can_move_to(self, next: RunStatus) -> bool {
        match next {
            RunStatus::Failed => !self.is_terminal(),
            _ => next as u8 == self as u8 + 1 && !self.is_terminal(),
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub fetched: usize,
    pub after_dedup: usize,
    pub predicted_relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub stage: RunStatus,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub intent: SearchIntent,
    pub options: SearchOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<QueryBundle>,
    pub status: RunStatus,
    /// When each reached stage was entered.
    pub timestamps: BTreeMap<RunStatus, DateTime<Utc>>,
    pub counts: RunCounts,
    /// Sources that failed while the rest of the run went on.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_errors: BTreeMap<Source, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
    #[serde(default)]
    pub hold_for_review: bool,
    /// Planning finished and the run waits for the bundle to be confirmed.
    #[serde(default)]
    pub awaiting_review: bool,
}

/// One classified item of a run. `rank` is 1-based within the item's source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: usize,
    pub score: f64,
    pub prediction: Prediction,
    pub item: RetrievedItem,
}

/// All results of a run, persisted as a single record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub run_id: String,
    /// Canonical source order, then rank.
    pub entries: Vec<ResultEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedLabel {
    pub run_id: String,
    pub item_id: String,
    pub label: Label,
    pub labeled_at: DateTime<Utc>,
    pub labeler: String,
    /// Store-wide insertion counter; breaks timestamp ties.
    pub seq: u64,
}

/// The label in force for an item: latest timestamp, then latest insertion.
pub fn current_label<'a>(history: impl IntoIterator<Item = &'a PersistedLabel>) -> Option<&'a PersistedLabel> {
    history.into_iter().max_by_key(|l| (l.labeled_at, l.seq))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultsView {
    #[default]
    RelevantOnly,
    All,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_moves_forward_one_stage_or_fails() {
        use RunStatus::*;
        assert!(Planning.can_move_to(Fetching));
        assert!(Fetching.can_move_to(Classifying));
        assert!(Classifying.can_move_to(Complete));
        assert!(!Planning.can_move_to(Classifying));
        assert!(!Classifying.can_move_to(Fetching));
        assert!(Fetching.can_move_to(Failed));
        assert!(!Complete.can_move_to(Failed));
        assert!(!Failed.can_move_to(Planning));
    }

    #[test]
    fn current_label_prefers_latest_time_then_latest_insert() {
        let at = |s| DateTime::from_timestamp(s, 0).unwrap();
        let l = |seq, t, label| PersistedLabel {
            run_id: "r".into(),
            item_id: "i".into(),
            label,
            labeled_at: at(t),
            labeler: "a".into(),
            seq,
        };
        let h = [l(0, 10, Label::Relevant), l(1, 5, Label::Irrelevant)];
        assert_eq!(current_label(&h).unwrap().seq, 0);
        let h = [l(0, 10, Label::Relevant), l(1, 10, Label::Irrelevant)];
        assert_eq!(current_label(&h).unwrap().label, Label::Irrelevant);
    }
}
