use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use super::split::stratified_folds;
use super::HarnessError;
use crate::models::{fit, ClassWeighting, ClassifierKind, Hyperparameters};
use crate::par::{self, ExecMode};
use crate::source::Label;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_NB_SMOOTHING: [f64; 3] = [1e-9, 1e-7, 1e-5];
pub const DEFAULT_REGULARIZATION: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Hyperparameter grid for one classifier kind. `strengths` is the
/// variance-smoothing axis for gaussian_nb and the regularization axis for
/// the linear models. Points are enumerated weighting-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: ClassifierKind,
    pub class_weightings: Vec<ClassWeighting>,
    pub strengths: Vec<f64>,
    pub folds: usize,
}

impl GridSpec {
    pub fn default_for(kind: ClassifierKind) -> Self {
        let strengths = match kind {
            ClassifierKind::GaussianNb => DEFAULT_NB_SMOOTHING.to_vec(),
            _ => DEFAULT_REGULARIZATION.to_vec(),
        };
        GridSpec {
            kind,
            class_weightings: ClassWeighting::ALL.to_vec(),
            strengths,
            folds: DEFAULT_FOLDS,
        }
    }

    pub fn single(hp: Hyperparameters, folds: usize) -> Self {
        GridSpec {
            kind: hp.kind,
            class_weightings: vec![hp.class_weighting],
            strengths: vec![hp.strength],
            folds,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.class_weightings.is_empty() || self.strengths.is_empty() {
            return Err(HarnessError::Grid(format!("{} grid has an empty axis", self.kind)));
        }
        if self.strengths.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(HarnessError::Grid(format!(
                "{} grid has a non-positive strength",
                self.kind
            )));
        }
        if self.kind == ClassifierKind::ExternalBoostedTrees {
            return Err(HarnessError::Grid("external_boosted_trees is not trainable".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Hyperparameters> {
        self.class_weightings
            .iter()
            .flat_map(|&class_weighting| {
                self.strengths.iter().map(move |&strength| Hyperparameters {
                    kind: self.kind,
                    class_weighting,
                    strength,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparameters,
    pub cv_score: f64,
    /// Mean CV balanced accuracy of every point, in enumeration order.
    pub scores: Vec<f64>,
}

fn cv_score(x: &[Vec<f64>], y: &[Label], folds: &[Vec<usize>], hp: &Hyperparameters) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for held in folds {
        let mut is_held = vec![false; y.len()];
        held.iter().for_each(|&i| is_held[i] = true);
        let (mut xt, mut yt) = (Vec::new(), Vec::new());
        for i in (0..y.len()).filter(|&i| !is_held[i]) {
            xt.push(x[i].clone());
            yt.push(y[i]);
        }
        let model = fit(&xt, &yt, hp)?;
        let mut pred = Vec::with_capacity(held.len());
        for &i in held {
            pred.push(model.predict_raw(&x[i])?.label);
        }
        let truth: Vec<Label> = held.iter().map(|&i| y[i]).collect();
        total += Confusion::from_labels(&truth, &pred).metrics().balanced_accuracy;
    }
    Ok(total / folds.len() as f64)
}

/// Exhaustive grid search scored by mean balanced accuracy over seeded
/// stratified folds. Ties go to the earliest point.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[Label],
    grid: &GridSpec,
    seed: u64,
    mode: ExecMode,
) -> Result<GridResult, HarnessError> {
    grid.validate()?;
    let folds = stratified_folds(y, grid.folds, seed)?;
    let points = grid.points();
    let scores = par::try_map(mode, &points, |hp| cv_score(x, y, &folds, hp))?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(GridResult {
        best: points[best],
        cv_score: scores[best],
        scores,
    })
}
