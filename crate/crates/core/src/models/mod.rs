//! Binary relevance classifiers over feature vectors, ranking, and an LLM
//! relevance baseline.
//!
//! All linear models minimise a weight-normalised mean loss
//! `(1/W) Σ s_i ℓ_i + penalty`, where `s_i` is the per-example class weight
//! and `W = Σ s_i`. Under this scaling, replicating examples and compensating
//! with balanced weights leaves the optimum unchanged.
//!
//! Decision convention for every kind: relevant iff `margin >= 0`. For the
//! probabilistic kinds the margin is `probability - 0.5`.

mod baseline;
mod document;
mod lbfgs;
mod linear;
mod nb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{FeatureSpec, FeatureVector};
use crate::source::{Label, Source};

pub use baseline::{llm_relevance_baseline, BaselineError, BASELINE_PROMPT_VERSION};
pub use document::{model_from_json, model_to_json, ModelDocumentError, MODEL_FORMAT, MODEL_VERSION};
pub use lbfgs::{minimize, LbfgsOutcome, LbfgsSettings};
pub use linear::{
    fit_linear_svc, fit_logistic_regression, fit_ridge, logistic_objective, LOGISTIC_MAX_ITER, LOGISTIC_TOLERANCE,
    SVC_MAX_EPOCHS, SVC_SEED, SVC_TOLERANCE,
};
pub use nb::{fit_gaussian_nb, DEFAULT_VAR_SMOOTHING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    GaussianNb,
    LogisticRegression,
    Ridge,
    LinearSvc,
    ExternalBoostedTrees,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::GaussianNb,
        ClassifierKind::LogisticRegression,
        ClassifierKind::Ridge,
        ClassifierKind::LinearSvc,
        ClassifierKind::ExternalBoostedTrees,
    ];

    /// Kinds this crate can train.
    pub const TRAINABLE: [ClassifierKind; 4] = [
        ClassifierKind::GaussianNb,
        ClassifierKind::LogisticRegression,
        ClassifierKind::Ridge,
        ClassifierKind::LinearSvc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::GaussianNb => "gaussian_nb",
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::Ridge => "ridge",
            ClassifierKind::LinearSvc => "linear_svc",
            ClassifierKind::ExternalBoostedTrees => "external_boosted_trees",
        }
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, ClassifierKind::GaussianNb | ClassifierKind::LogisticRegression)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown classifier kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    Uniform,
    Balanced,
}

impl ClassWeighting {
    pub const ALL: [ClassWeighting; 2] = [ClassWeighting::Uniform, ClassWeighting::Balanced];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassWeighting::Uniform => "uniform",
            ClassWeighting::Balanced => "balanced",
        }
    }

    /// Per-example weights: 1, or `N / (2 N_class)`.
    pub fn sample_weights(self, y: &[Label]) -> Vec<f64> {
        match self {
            ClassWeighting::Uniform => vec![1.0; y.len()],
            ClassWeighting::Balanced => {
                let n = y.len() as f64;
                let pos = y.iter().filter(|l| l.is_relevant()).count() as f64;
                let neg = n - pos;
                y.iter()
                    .map(|l| {
                        if l.is_relevant() {
                            n / (2.0 * pos)
                        } else {
                            n / (2.0 * neg)
                        }
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for ClassWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a model expects as input. `width` is always set; the rest is filled
/// in when the model was trained on embedding features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureContract {
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

impl FeatureContract {
    pub fn width(width: usize) -> Self {
        FeatureContract {
            width,
            spec: None,
            dims: None,
            field_count: None,
            source: None,
        }
    }

    pub fn for_features(spec: FeatureSpec, dims: usize, field_count: usize, source: Option<Source>) -> Self {
        FeatureContract {
            width: field_count * spec.width(dims),
            spec: Some(spec),
            dims: Some(dims),
            field_count: Some(field_count),
            source,
        }
    }

    pub fn check(&self, x: &FeatureVector) -> Result<(), ModelError> {
        let mismatch = self.spec.is_some_and(|s| s != x.spec)
            || self.dims.is_some_and(|d| d != x.dims)
            || self.field_count.is_some_and(|f| f != x.field_count);
        if mismatch {
            return Err(ModelError::Contract(format!(
                "model expects {:?}/{:?}/{:?} features, got {}/{}/{}",
                self.spec, self.dims, self.field_count, x.spec, x.dims, x.field_count
            )));
        }
        self.check_width(x.values.len())
    }

    pub fn check_width(&self, width: usize) -> Result<(), ModelError> {
        if width != self.width {
            return Err(ModelError::Dimension {
                expected: self.width,
                actual: width,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    GaussianNb {
        /// Index 0 is irrelevant, 1 is relevant.
        priors: [f64; 2],
        means: [Vec<f64>; 2],
        variances: [Vec<f64>; 2],
        var_smoothing: f64,
        epsilon: f64,
    },
    LogisticRegression {
        weights: Vec<f64>,
        bias: f64,
        regularization_strength: f64,
    },
    Ridge {
        weights: Vec<f64>,
        bias: f64,
        regularization_strength: f64,
    },
    LinearSvc {
        weights: Vec<f64>,
        bias: f64,
        regularization_strength: f64,
    },
}

impl ModelParams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ModelParams::GaussianNb { .. } => ClassifierKind::GaussianNb,
            ModelParams::LogisticRegression { .. } => ClassifierKind::LogisticRegression,
            ModelParams::Ridge { .. } => ClassifierKind::Ridge,
            ModelParams::LinearSvc { .. } => ClassifierKind::LinearSvc,
        }
    }

    fn width(&self) -> usize {
        match self {
            ModelParams::GaussianNb { means, .. } => means[0].len(),
            ModelParams::LogisticRegression { weights, .. }
            | ModelParams::Ridge { weights, .. }
            | ModelParams::LinearSvc { weights, .. } => weights.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub params: ModelParams,
    pub class_weighting: ClassWeighting,
    pub feature_contract: FeatureContract,
    pub training: TrainingInfo,
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        self.params.kind()
    }

    /// Narrows the contract to the embedding features the model was fit on.
    pub fn with_contract(mut self, contract: FeatureContract) -> Result<Self, ModelError> {
        if contract.width != self.params.width() {
            return Err(ModelError::Dimension {
                expected: self.params.width(),
                actual: contract.width,
            });
        }
        self.feature_contract = contract;
        Ok(self)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ModelError> {
        self.feature_contract.check(x)?;
        self.predict_raw(&x.values)
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        self.feature_contract.check_width(x.len())?;
        let kind = self.kind();
        Ok(match &self.params {
            ModelParams::GaussianNb { .. } => Prediction::from_probability(kind, nb::posterior(&self.params, x)),
            ModelParams::LogisticRegression { weights, bias, .. } => {
                Prediction::from_probability(kind, linear::sigmoid(linear::score(weights, *bias, x)))
            }
            ModelParams::Ridge { weights, bias, .. } | ModelParams::LinearSvc { weights, bias, .. } => {
                Prediction::from_margin(kind, linear::score(weights, *bias, x))
            }
        })
    }
}

/// Free-function form of [`TrainedClassifier::predict`].
pub fn predict(model: &TrainedClassifier, x: &FeatureVector) -> Result<Prediction, ModelError> {
    model.predict(x)
}

/// A model trained elsewhere (e.g. gradient-boosted trees) that can be
/// registered alongside the native kinds.
pub trait ExternalModel: Send + Sync {
    fn feature_contract(&self) -> &FeatureContract;
    fn predict_probability(&self, x: &[f64]) -> Result<f64, ModelError>;
}

pub fn predict_external(model: &dyn ExternalModel, x: &FeatureVector) -> Result<Prediction, ModelError> {
    model.feature_contract().check(x)?;
    let p = model.predict_probability(&x.values)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(ModelError::Contract(format!("external model returned probability {p}")));
    }
    Ok(Prediction::from_probability(ClassifierKind::ExternalBoostedTrees, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub kind: ClassifierKind,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    pub margin: f64,
}

impl Prediction {
    pub fn from_probability(kind: ClassifierKind, p: f64) -> Self {
        let margin = p - 0.5;
        Prediction {
            kind,
            label: Label::from_relevant(margin >= 0.0),
            probability: Some(p),
            margin,
        }
    }

    pub fn from_margin(kind: ClassifierKind, margin: f64) -> Self {
        Prediction {
            kind,
            label: Label::from_relevant(margin >= 0.0),
            probability: None,
            margin,
        }
    }

    /// Ranking key: probability when available, else margin.
    pub fn score(&self) -> f64 {
        self.probability.unwrap_or(self.margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub item_id: String,
    pub prediction: Prediction,
    pub rank: usize,
    pub score: f64,
}

/// Sorts by score descending, keeping input order among ties, and assigns
/// ranks 1..N.
pub fn rank_items(predictions: &[(String, Prediction)]) -> Result<Vec<RankedResult>, ModelError> {
    if let Some((_, first)) = predictions.first() {
        if let Some((id, p)) = predictions.iter().find(|(_, p)| p.kind != first.kind) {
            return Err(ModelError::Contract(format!(
                "cannot rank {} predictions together with {} prediction for {id}",
                first.kind, p.kind
            )));
        }
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].1.score().total_cmp(&predictions[a].1.score()));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let (item_id, prediction) = &predictions[idx];
            RankedResult {
                item_id: item_id.clone(),
                prediction: *prediction,
                rank: i + 1,
                score: prediction.score(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),
    #[error("dimension mismatch: expected width {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Checks a training set and returns its width.
pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[Label]) -> Result<usize, ModelError> {
    if x.is_empty() {
        return Err(ModelError::DegenerateTraining("no training examples".into()));
    }
    if x.len() != y.len() {
        return Err(ModelError::Contract(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let width = x[0].len();
    if width == 0 {
        return Err(ModelError::DegenerateTraining("zero-width feature vectors".into()));
    }
    if let Some(row) = x.iter().find(|r| r.len() != width) {
        return Err(ModelError::Dimension {
            expected: width,
            actual: row.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::Contract("non-finite feature value".into()));
    }
    let pos = y.iter().filter(|l| l.is_relevant()).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::DegenerateTraining(
            "training labels contain a single class".into(),
        ));
    }
    Ok(width)
}

pub(crate) fn check_strength(lambda: f64) -> Result<(), ModelError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(ModelError::Hyperparameter(format!(
            "regularization strength must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// Hyperparameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kind: ClassifierKind,
    pub class_weighting: ClassWeighting,
    /// Variance smoothing for gaussian_nb, regularization strength otherwise.
    pub strength: f64,
}

/// Trains the model described by `hp`.
pub fn fit(x: &[Vec<f64>], y: &[Label], hp: &Hyperparameters) -> Result<TrainedClassifier, ModelError> {
    match hp.kind {
        ClassifierKind::GaussianNb => fit_gaussian_nb(x, y, hp.class_weighting, hp.strength),
        ClassifierKind::LogisticRegression => fit_logistic_regression(x, y, hp.class_weighting, hp.strength),
        ClassifierKind::Ridge => fit_ridge(x, y, hp.class_weighting, hp.strength),
        ClassifierKind::LinearSvc => fit_linear_svc(x, y, hp.class_weighting, hp.strength),
        ClassifierKind::ExternalBoostedTrees => Err(ModelError::Contract(
            "external_boosted_trees cannot be trained here; register a pre-trained model".into(),
        )),
    }
}
