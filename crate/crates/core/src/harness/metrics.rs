use serde::{Deserialize, Serialize};

use crate::source::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(y_true: &[Label], y_pred: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (t, p) in y_true.iter().zip(y_pred) {
            match (t.is_relevant(), p.is_relevant()) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let specificity = ratio(self.tn, self.tn + self.fp);
        // equals 2pr/(p+r), computed with a single rounding
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        Metrics {
            balanced_accuracy: (recall + specificity) / 2.0,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    Length { truth: usize, predicted: usize },
    #[error("no labels to score")]
    Empty,
}

/// Scores predictions with relevant as the positive class. Every 0/0 ratio
/// is taken as 0.
pub fn compute_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<(Metrics, Confusion), MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let c = Confusion::from_labels(y_true, y_pred);
    Ok((c.metrics(), c))
}
