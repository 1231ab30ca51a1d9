//! Grey-literature retrieval and screening.
//!
//! The crate is organised along the three stages of a screening run:
//!
//! 1. [`planner`] turns a research intent into platform-specific queries.
//! 2. [`connectors`] executes those queries against GitHub, Stack Overflow
//!    and a web-search backend, with retries, provenance and near-duplicate
//!    removal.
//! 3. [`embedding`] and [`models`] turn each harvested item into features and
//!    classify/rank it against the intent.
//!
//! [`harness`] holds the training and evaluation protocol used to produce the
//! deployed classifiers, and [`study`] small helpers for usability-study data.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iterators otherwise.

pub mod connectors;
pub mod embedding;
pub mod harness;
pub mod llm;
pub mod models;
pub mod par;
pub mod planner;
pub mod source;
pub mod study;

pub use source::{Label, Source};
