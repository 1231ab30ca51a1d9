use serde::{Deserialize, Serialize};

use super::TrainedClassifier;

pub const MODEL_FORMAT: &str = "greylit-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: TrainedClassifier,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelDocumentError {
    #[error("model document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model document {format} v{version}")]
    Version { format: String, version: u32 },
}

/// Serializes a model. Floats are written in shortest round-trip form, so
/// [`model_from_json`] restores them bit for bit.
pub fn model_to_json(model: &TrainedClassifier) -> String {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes") + "\n"
}

pub fn model_from_json(text: &str) -> Result<TrainedClassifier, ModelDocumentError> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
        return Err(ModelDocumentError::Version {
            format: doc.format,
            version: doc.version,
        });
    }
    Ok(doc.model)
}
