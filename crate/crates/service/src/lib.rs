//! Run orchestration for greylit: the prompt-to-corpus pipeline, an
//! append-only run/result/label store, the shipped model registry, the HTTP
//! API and the pieces of the `greylit` CLI.

pub mod api;
pub mod environment;
mod export;
pub mod pipeline;
pub mod registry;
pub mod store;
pub mod train;
pub mod types;

pub use export::ExportFormat;
pub use pipeline::{CreateRun, Environment, LabelRequest, ResultsPage, ResultsQuery, Service, ServiceError};
pub use registry::ModelRegistry;
pub use store::Store;
pub use types::{PersistedLabel, ResultEntry, ResultsView, RunRecord, RunStatus};
