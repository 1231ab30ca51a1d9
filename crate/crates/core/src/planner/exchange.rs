use serde::{Deserialize, Serialize};

use super::{GeneratorInfo, QueryBundle, StructuredQuery};

pub const QUERY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryDocument {
    schema_version: u32,
    intent_id: String,
    generator: GeneratorInfo,
    queries: Vec<StructuredQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ImportError {
    /// Location of the offending value, e.g. `queries[1]`.
    pub path: String,
    pub message: String,
}

/// Serializes `bundle` as a pretty-printed, versioned JSON document.
pub fn export_queries(bundle: &QueryBundle) -> String {
    let doc = QueryDocument {
        schema_version: QUERY_SCHEMA_VERSION,
        intent_id: bundle.intent_id.clone(),
        generator: bundle.generator.clone(),
        queries: bundle.queries.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("query document serializes");
    text.push('\n');
    text
}

/// Parses a query document. Queries without an `origin` field are marked
/// as imported.
pub fn import_queries(document: &str) -> Result<QueryBundle, ImportError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: QueryDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ImportError {
            path: if path == "." { "$".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    if doc.schema_version != QUERY_SCHEMA_VERSION {
        return Err(ImportError {
            path: "schema_version".into(),
            message: format!(
                "unsupported schema version {} (expected {QUERY_SCHEMA_VERSION})",
                doc.schema_version
            ),
        });
    }
    Ok(QueryBundle {
        intent_id: doc.intent_id,
        generator: doc.generator,
        queries: doc.queries,
    })
}
