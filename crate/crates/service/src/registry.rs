//! Shipped classifiers, keyed by (source, embedding model, dims).
//!
//! A registry directory holds `registry.json` plus one model document per
//! entry. `best_overall` marks the configuration the study selected for the
//! (source, embedding model) pair across all dimensionalities.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use greylit_core::embedding::FeatureSpec;
use greylit_core::models::{model_from_json, model_to_json, ClassifierKind, TrainedClassifier};
use greylit_core::Source;
use serde::{Deserialize, Serialize};

pub const REGISTRY_FILE: &str = "registry.json";
pub const REGISTRY_FORMAT: &str = "greylit-registry";
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub source: Source,
    pub embedding_model_id: String,
    pub dims: usize,
    pub spec: FeatureSpec,
    pub kind: ClassifierKind,
    /// Relative to the registry directory.
    pub path: String,
    #[serde(default)]
    pub best_overall: bool,
    /// Held-out balanced accuracy the study measured for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    format: String,
    version: u32,
    models: Vec<RegistryEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

pub type RegistryKey = (Source, String, usize);

#[derive(Debug, Clone)]
pub struct RegisteredModel {
    pub entry: RegistryEntry,
    pub model: TrainedClassifier,
}

#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<RegistryKey, RegisteredModel>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, source: Source, embedding_model_id: &str, dims: usize) -> Option<&RegisteredModel> {
        self.models.get(&(source, embedding_model_id.to_string(), dims))
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.models.values().map(|m| &m.entry)
    }

    /// Adds a model, checking that its feature contract agrees with the key.
    pub fn insert(&mut self, entry: RegistryEntry, model: TrainedClassifier) -> Result<(), String> {
        let c = &model.feature_contract;
        if c.source.is_some_and(|s| s != entry.source) {
            return Err(format!(
                "model trained for {:?}, registered for {}",
                c.source, entry.source
            ));
        }
        if c.dims.is_some_and(|d| d != entry.dims) {
            return Err(format!(
                "model expects {:?} dims, registered for {}",
                c.dims, entry.dims
            ));
        }
        if c.spec != Some(entry.spec) {
            return Err(format!(
                "model feature spec {:?} differs from entry {}",
                c.spec, entry.spec
            ));
        }
        if model.kind() != entry.kind {
            return Err(format!("model kind {} differs from entry {}", model.kind(), entry.kind));
        }
        let key = (entry.source, entry.embedding_model_id.clone(), entry.dims);
        self.models.insert(key, RegisteredModel { entry, model });
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RegistryError> {
        let path = dir.join(REGISTRY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| RegistryError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let invalid = |path: &Path, message: String| RegistryError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let doc: RegistryDocument = serde_json::from_str(&text).map_err(|e| invalid(&path, e.to_string()))?;
        if doc.format != REGISTRY_FORMAT || doc.version != REGISTRY_VERSION {
            return Err(invalid(
                &path,
                format!("unsupported registry {} v{}", doc.format, doc.version),
            ));
        }
        let mut registry = ModelRegistry::empty();
        for entry in doc.models {
            let model_path = dir.join(&entry.path);
            let text = std::fs::read_to_string(&model_path).map_err(|e| RegistryError::Io {
                path: model_path.clone(),
                message: e.to_string(),
            })?;
            let model = model_from_json(&text).map_err(|e| invalid(&model_path, e.to_string()))?;
            registry.insert(entry, model).map_err(|m| invalid(&model_path, m))?;
        }
        Ok(registry)
    }

    /// Writes every model and the index into `dir`. Model files are named
    /// after their key.
    pub fn save(&self, dir: &Path) -> Result<(), RegistryError> {
        let io = |path: &Path, e: std::io::Error| RegistryError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let models_dir = dir.join("models");
        std::fs::create_dir_all(&models_dir).map_err(|e| io(&models_dir, e))?;
        let mut entries = Vec::new();
        for m in self.models.values() {
            let mut entry = m.entry.clone();
            entry.path = format!(
                "models/{}__{}__{}.json",
                entry.source,
                file_safe(&entry.embedding_model_id),
                entry.dims
            );
            let path = dir.join(&entry.path);
            std::fs::write(&path, model_to_json(&m.model)).map_err(|e| io(&path, e))?;
            entries.push(entry);
        }
        let doc = RegistryDocument {
            format: REGISTRY_FORMAT.into(),
            version: REGISTRY_VERSION,
            models: entries,
        };
        let path = dir.join(REGISTRY_FILE);
        let mut text = serde_json::to_string_pretty(&doc).expect("registry serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(&path, e))
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
