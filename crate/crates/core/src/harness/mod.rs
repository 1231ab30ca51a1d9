//! Training and evaluation protocol: labeled datasets, seeded 50/50
//! splits, stratified grid search, metrics, the full configuration study,
//! and SUS scoring for usability questionnaires.

mod dataset;
mod grid;
mod metrics;
mod protocol;
mod split;
mod synthetic;

pub use dataset::{
    deduplicate_records, load_dataset, parse_records, published_manifest, read_manifest, records_to_jsonl, Counts,
    DatasetError, DatasetIntent, DatasetItem, DatasetRecord, LabeledDataset, Manifest, DATASET_SCHEMA_VERSION,
    MANIFEST_FILE,
};
pub use grid::{grid_search, GridResult, GridSpec, DEFAULT_FOLDS, DEFAULT_NB_SMOOTHING, DEFAULT_REGULARIZATION};
pub use metrics::{compute_metrics, Confusion, Metrics, MetricsError};
pub use protocol::{
    embed_records, run_study, study_report_csv, EmbeddedRecord, EvalReport, StudyConfig, StudyDataset, StudyResult,
};
pub use split::{split_indices, stratified_folds, SplitError, MAX_SPLIT_REDRAWS};
pub use synthetic::{synthetic_records, synthetic_study_dataset, SyntheticSpec};

use crate::embedding::EmbeddingError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("grid: {0}")]
    Grid(String),
    #[error("{config}: {cause}")]
    Cell { config: String, cause: Box<HarnessError> },
}

/// Splits records into (train, test) halves; see [`split_indices`].
pub fn split_dataset(
    records: &[DatasetRecord],
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>), SplitError> {
    let labels: Vec<_> = records.iter().map(|r| r.label).collect();
    let (train, test) = split_indices(&labels, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SusError {
    #[error("expected 10 responses, got {0}")]
    Count(usize),
    #[error("response {position} is {value}, outside 1..=5")]
    Range { position: usize, value: u8 },
}

/// System Usability Scale score. Odd items (1-indexed) are positively
/// worded and contribute `r - 1`; even items contribute `5 - r`; the sum is
/// scaled by 2.5.
pub fn sus_score(responses: &[u8]) -> Result<f64, SusError> {
    if responses.len() != 10 {
        return Err(SusError::Count(responses.len()));
    }
    let mut sum = 0u32;
    for (i, &r) in responses.iter().enumerate() {
        if !(1..=5).contains(&r) {
            return Err(SusError::Range {
                position: i + 1,
                value: r,
            });
        }
        sum += if i % 2 == 0 { r as u32 - 1 } else { 5 - r as u32 };
    }
    Ok(sum as f64 * 2.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sus_extremes() {
        assert_eq!(sus_score(&[5, 1, 5, 1, 5, 1, 5, 1, 5, 1]), Ok(100.0));
        assert_eq!(sus_score(&[3; 10]), Ok(50.0));
        assert_eq!(sus_score(&[1, 5, 1, 5, 1, 5, 1, 5, 1, 5]), Ok(0.0));
        assert_eq!(sus_score(&[3; 9]), Err(SusError::Count(9)));
        assert!(matches!(
            sus_score(&[0, 3, 3, 3, 3, 3, 3, 3, 3, 3]),
            Err(SusError::Range { position: 1, .. })
        ));
    }
}
