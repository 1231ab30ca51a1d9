//! Executing platform queries: HTTP transport, retries, pagination,
//! provenance, per-source field extraction and near-duplicate removal.

pub mod adapters;
mod client;
pub mod dedup;
pub mod http;
mod item;
pub mod retry;

pub use client::{
    attach_readmes, execute_query, harvest, BudgetPermit, ConnectorError, HarvestOutcome, HostBudget, ScheduledQuery,
    SourceClient, SourceClients, DEFAULT_HOST_BUDGET, DEFAULT_PAGE_LIMIT,
};
pub use dedup::{deduplicate, deduplicate_with, normalize_url};
pub use item::{extra, extract_item, item_id_for, ExtraValue, ExtractError, FetchProvenance, RetrievedItem};
