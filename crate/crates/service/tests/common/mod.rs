#![allow(dead_code)]

use std::path::{Path, PathBuf};

use greylit_service::environment::fixture_environment;
use greylit_service::{CreateRun, Service, Store};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e")
}

pub fn request() -> CreateRun {
    let text = std::fs::read_to_string(fixtures().join("request.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn service(data: &Path) -> Service {
    Service::new(fixture_environment(&fixtures()).unwrap(), Store::open(data).unwrap()).unwrap()
}

/// Words that only occur in the relevant half of the fixture vocabulary.
pub const RELEVANT_VOCABULARY: [&str; 5] = ["saga", "transaction", "compensat", "rollback", "two phase"];
